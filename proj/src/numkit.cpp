#include "fedpgp/numkit.hpp"

#include <algorithm>
#include <cmath>

namespace fedpgp {

Vector softmax(const Vector& logits, double tau) {
    if (!(tau > 0.0)) throw InvalidParameter("softmax: tau must be positive");
    if (logits.empty()) throw InvalidParameter("softmax: empty logits");
    if (!all_finite(logits)) throw InvalidParameter("softmax: non-finite logit");

    Vector scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / tau;
    const double shift = *std::max_element(scaled.begin(), scaled.end());

    Vector out(scaled.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        out[i] = std::exp(scaled[i] - shift);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

double log_softmax_at(const Vector& logits, double tau, std::size_t index) {
    if (!(tau > 0.0)) throw InvalidParameter("log_softmax_at: tau must be positive");
    if (index >= logits.size()) throw InvalidParameter("log_softmax_at: index out of range");

    double shift = logits[0] / tau;
    for (double v : logits) shift = std::max(shift, v / tau);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v / tau - shift);
    return logits[index] / tau - shift - std::log(sum);
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: lengths " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

double cosine_sim(const Vector& a, const Vector& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateVector("cosine_sim: zero-norm input");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

Vector normalize(const Vector& a) {
    const double n = norm(a);
    if (n == 0.0) throw DegenerateVector("normalize: zero-norm input");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / n;
    return out;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
    if (!(h > 0.0)) throw InvalidParameter("finite_diff_grad: h must be positive");
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double orig = probe(i, j);
            probe(i, j) = orig + h;
            const double fp = f(probe);
            probe(i, j) = orig - h;
            const double fm = f(probe);
            probe(i, j) = orig;
            grad(i, j) = (fp - fm) / (2.0 * h);
        }
    }
    return grad;
}

}  // namespace fedpgp
