#include "fedpgp/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fedpgp/numkit.hpp"

namespace fedpgp {

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// d cos(u, v) / d u = v/(|u||v|) - cos * u/|u|^2
Vector cos_grad_u(const Vector& u, const Vector& v, double nu, double nv, double c) {
    Vector g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = v[i] / (nu * nv) - c * u[i] / (nu * nu);
    return g;
}

double checked_norm(const Vector& v, const char* what) {
    const double n = norm(v);
    if (n == 0.0) throw DegenerateVector(std::string(what) + ": zero-norm vector");
    return n;
}

std::size_t label_index(const std::vector<int>& classes, int label) {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == label) return i;
    throw UnknownClass("cross_entropy_loss: label " + std::to_string(label) +
                       " not in the class set");
}

// Ascending unique labels of the batch; the contrastive term is averaged
// over exactly these classes.
std::vector<int> classes_in_batch(const TrainingBatch& batch) {
    std::vector<int> cs = batch.labels;
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    return cs;
}

void axpy(Vector& acc, const Vector& x, double scale) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * x[i];
}

}  // namespace

Vector class_probabilities(const Vector& x, const Matrix& prompt, const std::vector<int>& classes,
                           const FrozenEncoders& enc, double tau_cls) {
    if (classes.empty()) throw InvalidParameter("class_probabilities: empty class set");
    if (!(tau_cls > 0.0)) throw InvalidParameter("class_probabilities: tau_cls must be positive");
    const Vector z_img = enc.encode_image(x);
    Vector logits(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const Vector z_c = enc.encode_text(enc.build_prompt_sequence(prompt, classes[i]));
        logits[i] = dot(z_img, z_c);
    }
    return softmax(logits, tau_cls);
}

CrossEntropyResult cross_entropy_loss(const TrainingBatch& batch, const Matrix& prompt,
                                      const std::vector<int>& classes, const FrozenEncoders& enc,
                                      double tau_cls) {
    if (classes.empty()) throw InvalidParameter("cross_entropy_loss: empty class set");
    if (batch.size() == 0) throw InvalidParameter("cross_entropy_loss: empty batch");
    if (batch.features.size() != batch.labels.size()) {
        throw ShapeError("cross_entropy_loss: feature/label count mismatch");
    }
    if (!(tau_cls > 0.0)) throw InvalidParameter("cross_entropy_loss: tau_cls must be positive");

    std::vector<PromptSequence> seqs;
    std::vector<Vector> z_text;
    seqs.reserve(classes.size());
    z_text.reserve(classes.size());
    for (int c : classes) {
        seqs.push_back(enc.build_prompt_sequence(prompt, static_cast<std::size_t>(c)));
        z_text.push_back(enc.encode_text(seqs.back()));
    }

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    // Per-class accumulated upstream gradient d loss / d z_c.
    std::vector<Vector> upstream(classes.size(), Vector(enc.dims().d_feat, 0.0));

    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Vector z_img = enc.encode_image(*batch.features[s]);
        if (!all_finite(z_img)) {
            throw NumericalFailure("cross_entropy_loss: non-finite image features");
        }
        Vector logits(classes.size());
        for (std::size_t i = 0; i < classes.size(); ++i) logits[i] = dot(z_img, z_text[i]);
        const std::size_t y = label_index(classes, batch.labels[s]);
        loss -= log_softmax_at(logits, tau_cls, y) * inv_batch;

        const Vector probs = softmax(logits, tau_cls);
        for (std::size_t i = 0; i < classes.size(); ++i) {
            const double coef = (probs[i] - (i == y ? 1.0 : 0.0)) / tau_cls * inv_batch;
            axpy(upstream[i], z_img, coef);
        }
    }

    Matrix grad(prompt.rows(), prompt.cols());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        add_in_place(grad, enc.text_grad(seqs[i], upstream[i]));
    }
    return CrossEntropyResult{loss, std::move(grad)};
}

ContrastiveResult contrastive_loss(const Vector& z_global, const Vector& z_anchor,
                                   const Vector& z_personal, double tau_con) {
    if (!(tau_con > 0.0)) throw InvalidParameter("contrastive_loss: tau_con must be positive");
    const double ng = checked_norm(z_global, "contrastive_loss");
    const double nc = checked_norm(z_anchor, "contrastive_loss");
    const double ni = checked_norm(z_personal, "contrastive_loss");

    const double pos = dot(z_global, z_anchor) / (ng * nc);   // sim(z_G, z_C)
    const double neg = dot(z_global, z_personal) / (ng * ni);  // sim(z_G, z_i)

    // loss = softplus((neg - pos)/tau); d loss / d(neg - pos) = sigmoid(...)/tau
    const double arg = (neg - pos) / tau_con;
    const double loss = softplus(arg);
    const double s = sigmoid(arg) / tau_con;

    ContrastiveResult r;
    r.loss = loss;
    r.grad_z_global = cos_grad_u(z_global, z_anchor, ng, nc, pos);
    for (double& v : r.grad_z_global) v *= -s;
    axpy(r.grad_z_global, cos_grad_u(z_global, z_personal, ng, ni, neg), s);
    r.grad_z_personal = cos_grad_u(z_personal, z_global, ni, ng, neg);
    for (double& v : r.grad_z_personal) v *= s;
    return r;
}

ContrastiveResult ablation_loss(ContrastKind kind, const Vector& z_global, const Vector& z_anchor,
                                const Vector& z_personal, bool negate_pos) {
    ContrastiveResult r;
    switch (kind) {
        case ContrastKind::no_positive: {
            const double ng = checked_norm(z_global, "ablation_loss");
            const double ni = checked_norm(z_personal, "ablation_loss");
            const double neg = dot(z_global, z_personal) / (ng * ni);
            r.loss = 1.0 - neg;
            r.grad_z_global = cos_grad_u(z_global, z_personal, ng, ni, neg);
            for (double& v : r.grad_z_global) v *= -1.0;
            r.grad_z_personal = cos_grad_u(z_personal, z_global, ni, ng, neg);
            for (double& v : r.grad_z_personal) v *= -1.0;
            return r;
        }
        case ContrastKind::no_negative: {
            const double ng = checked_norm(z_global, "ablation_loss");
            const double nc = checked_norm(z_anchor, "ablation_loss");
            const double pos = dot(z_global, z_anchor) / (ng * nc);
            const double sign = negate_pos ? -1.0 : 1.0;
            r.loss = sign * pos;
            r.grad_z_global = cos_grad_u(z_global, z_anchor, ng, nc, pos);
            for (double& v : r.grad_z_global) v *= sign;
            r.grad_z_personal = Vector(z_personal.size(), 0.0);
            return r;
        }
        case ContrastKind::standard:
            throw InvalidParameter("ablation_loss: use contrastive_loss for the standard kind");
    }
    throw InvalidParameter("ablation_loss: unknown kind");
}

CompositeResult composite_loss(const TrainingBatch& batch, const Matrix& p_global,
                               const Matrix& p_personal, const std::vector<int>& classes,
                               const FrozenEncoders& enc, const LossConfig& cfg,
                               ContrastKind kind) {
    if (cfg.mu < 0.0) throw InvalidParameter("composite_loss: mu must be nonnegative");

    CompositeResult out;
    auto ce = cross_entropy_loss(batch, p_personal, classes, enc, cfg.tau_cls);
    out.l_ce = ce.loss;
    out.grad_personal = std::move(ce.grad);
    out.grad_global_direct = Matrix(p_global.rows(), p_global.cols());

    // With mu == 0 the contrastive path is skipped entirely so the gradients
    // are exactly the cross-entropy ones.
    if (cfg.mu > 0.0) {
        const std::vector<int> present = classes_in_batch(batch);
        const double class_weight = 1.0 / static_cast<double>(present.size());
        Vector z_anchor_avg;
        if (cfg.zc_class_averaged) z_anchor_avg = enc.handcrafted_class_averaged();

        for (int c : present) {
            const auto cid = static_cast<std::size_t>(c);
            const PromptSequence seq_g = enc.build_prompt_sequence(p_global, cid);
            const PromptSequence seq_i = enc.build_prompt_sequence(p_personal, cid);
            const Vector z_g = enc.encode_text(seq_g);
            const Vector z_i = enc.encode_text(seq_i);
            const Vector& z_c =
                cfg.zc_class_averaged ? z_anchor_avg : enc.handcrafted_representation(cid);

            const ContrastiveResult con =
                kind == ContrastKind::standard
                    ? contrastive_loss(z_g, z_c, z_i, cfg.tau_con)
                    : ablation_loss(kind, z_g, z_c, z_i, cfg.negate_pos_ablation);

            out.l_con += con.loss * class_weight;

            Vector up_g = con.grad_z_global;
            for (double& v : up_g) v *= cfg.mu * class_weight;
            add_in_place(out.grad_global_direct, enc.text_grad(seq_g, up_g));

            Vector up_i = con.grad_z_personal;
            for (double& v : up_i) v *= cfg.mu * class_weight;
            add_in_place(out.grad_personal, enc.text_grad(seq_i, up_i));
        }
    }

    out.total = out.l_ce + cfg.mu * out.l_con;
    if (!std::isfinite(out.total)) throw NumericalFailure("composite_loss: non-finite loss");
    return out;
}

LossReport total_loss(const TrainingBatch& batch, const GlobalPrompt& global,
                      const LowRankAdapter& adapter, const std::vector<int>& classes,
                      const FrozenEncoders& enc, const LossConfig& cfg, ContrastKind kind) {
    const PersonalizedPrompt personal = compose(global, adapter);
    CompositeResult c = composite_loss(batch, global.p, personal.p, classes, enc, cfg, kind);

    LossReport report;
    report.l_ce = c.l_ce;
    report.l_con = c.l_con;
    report.total = c.total;
    // p_i = p_G + U V: the personal-path gradient flows into p_G unchanged
    // and into the factors through the product rule.
    report.grad_global = c.grad_personal + c.grad_global_direct;
    report.grad_u = matmul(c.grad_personal, transpose(adapter.v));
    report.grad_v = matmul(transpose(adapter.u), c.grad_personal);
    return report;
}

}  // namespace fedpgp
