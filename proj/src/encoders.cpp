#include "fedpgp/encoders.hpp"

#include <cmath>
#include <cstring>

namespace fedpgp {

namespace {

std::uint64_t fnv1a_bytes(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_matrix(std::uint64_t h, const Matrix& m) {
    return fnv1a_bytes(h, m.data().data(), m.data().size() * sizeof(double));
}

}  // namespace

FrozenEncoders::FrozenEncoders(const EncoderDims& dims, std::size_t num_classes, std::uint64_t seed)
    : dims_(dims), seed_(seed) {
    if (num_classes == 0) throw InvalidParameter("encoders: num_classes must be at least 1");
    if (dims.d_token == 0 || dims.d_feat == 0 || dims.d_img == 0 || dims.hidden == 0 ||
        dims.context_len == 0) {
        throw InvalidParameter("encoders: all dimensions must be positive");
    }
    Rng rng(seed);
    // Draw order is fixed; the seed-0 goldens depend on it. Map weights get
    // 1/sqrt(fan_in); token embeddings are inputs and stay at unit scale,
    // matching the magnitude of raw image features.
    w1_ = Matrix::gaussian(dims.hidden, dims.d_token, rng, 1.0 / std::sqrt(double(dims.d_token)));
    w2_ = Matrix::gaussian(dims.d_feat, dims.hidden, rng, 1.0 / std::sqrt(double(dims.hidden)));
    v1_ = Matrix::gaussian(dims.hidden, dims.d_img, rng, 1.0 / std::sqrt(double(dims.d_img)));
    v2_ = Matrix::gaussian(dims.d_feat, dims.hidden, rng, 1.0 / std::sqrt(double(dims.hidden)));
    class_embeddings_ = Matrix::gaussian(num_classes, dims.d_token, rng, 1.0);
    template_tokens_ = Matrix::gaussian(dims.d_token, dims.context_len, rng, 1.0);
}

FrozenEncoders::FrozenEncoders(const EncoderDims& dims, Matrix w1, Matrix w2, Matrix v1, Matrix v2,
                               Matrix class_embeddings, Matrix template_tokens)
    : dims_(dims),
      w1_(std::move(w1)),
      w2_(std::move(w2)),
      v1_(std::move(v1)),
      v2_(std::move(v2)),
      class_embeddings_(std::move(class_embeddings)),
      template_tokens_(std::move(template_tokens)) {
    check_shapes();
}

void FrozenEncoders::check_shapes() const {
    if (w1_.rows() != dims_.hidden || w1_.cols() != dims_.d_token ||
        w2_.rows() != dims_.d_feat || w2_.cols() != dims_.hidden ||
        v1_.rows() != dims_.hidden || v1_.cols() != dims_.d_img ||
        v2_.rows() != dims_.d_feat || v2_.cols() != dims_.hidden ||
        class_embeddings_.cols() != dims_.d_token || template_tokens_.rows() != dims_.d_token ||
        template_tokens_.cols() != dims_.context_len) {
        throw ShapeError("encoders: weight shapes inconsistent with dims");
    }
}

Vector FrozenEncoders::class_embedding(std::size_t class_id) const {
    if (class_id >= class_embeddings_.rows()) {
        throw UnknownClass("encoders: class id " + std::to_string(class_id) + " out of range (" +
                           std::to_string(class_embeddings_.rows()) + " classes)");
    }
    return class_embeddings_.row(class_id);
}

PromptSequence FrozenEncoders::build_prompt_sequence(const Matrix& prompt,
                                                     std::size_t class_id) const {
    if (prompt.rows() != dims_.d_token || prompt.cols() != dims_.context_len) {
        throw ShapeError("build_prompt_sequence: prompt is " + std::to_string(prompt.rows()) + "x" +
                         std::to_string(prompt.cols()) + ", expected " +
                         std::to_string(dims_.d_token) + "x" + std::to_string(dims_.context_len));
    }
    PromptSequence seq;
    seq.tokens.reserve(dims_.context_len + 1);
    for (std::size_t j = 0; j < prompt.cols(); ++j) seq.tokens.push_back(prompt.col(j));
    seq.tokens.push_back(class_embedding(class_id));
    return seq;
}

Vector FrozenEncoders::meanpool(const PromptSequence& seq) const {
    if (seq.tokens.size() != dims_.context_len + 1) {
        throw ShapeError("encode_text: sequence has " + std::to_string(seq.tokens.size()) +
                         " tokens, expected " + std::to_string(dims_.context_len + 1));
    }
    Vector m(dims_.d_token, 0.0);
    for (const Vector& t : seq.tokens) {
        if (t.size() != dims_.d_token) throw ShapeError("encode_text: token dimension mismatch");
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += t[i];
    }
    const double inv = 1.0 / static_cast<double>(seq.tokens.size());
    for (double& v : m) v *= inv;
    return m;
}

Vector FrozenEncoders::encode_text(const PromptSequence& seq) const {
    const Vector m = meanpool(seq);
    Vector u = matvec(w1_, m);
    for (double& v : u) v = std::tanh(v);
    const Vector y = matvec(w2_, u);
    return normalize(y);
}

Vector FrozenEncoders::encode_image(const Vector& x) const {
    if (x.size() != dims_.d_img) {
        throw ShapeError("encode_image: feature has " + std::to_string(x.size()) +
                         " dims, expected " + std::to_string(dims_.d_img));
    }
    Vector u = matvec(v1_, x);
    for (double& v : u) v = std::tanh(v);
    const Vector y = matvec(v2_, u);
    return normalize(y);
}

Vector FrozenEncoders::handcrafted_representation(std::size_t class_id) const {
    return encode_text(build_prompt_sequence(template_tokens_, class_id));
}

Vector FrozenEncoders::handcrafted_class_averaged() const {
    Vector mean(dims_.d_feat, 0.0);
    for (std::size_t c = 0; c < num_classes(); ++c) {
        const Vector z = handcrafted_representation(c);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += z[i];
    }
    const double inv = 1.0 / static_cast<double>(num_classes());
    for (double& v : mean) v *= inv;
    return normalize(mean);
}

Matrix FrozenEncoders::text_grad(const PromptSequence& seq, const Vector& upstream) const {
    if (upstream.size() != dims_.d_feat) {
        throw ShapeError("text_grad: upstream has " + std::to_string(upstream.size()) +
                         " dims, expected " + std::to_string(dims_.d_feat));
    }
    // Forward pass kept for the backward quantities.
    const Vector m = meanpool(seq);
    const Vector u = matvec(w1_, m);
    Vector a(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) a[i] = std::tanh(u[i]);
    const Vector y = matvec(w2_, a);
    const double ny = norm(y);
    if (ny == 0.0) throw DegenerateVector("text_grad: pre-normalization output has zero norm");
    Vector z(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) z[i] = y[i] / ny;

    // d z / d y = (I - z z^T) / ||y||
    const double zg = dot(z, upstream);
    Vector gy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) gy[i] = (upstream[i] - z[i] * zg) / ny;

    Vector ga = matvec_transposed(w2_, gy);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= 1.0 - a[i] * a[i];
    const Vector gm = matvec_transposed(w1_, ga);

    // Mean-pool distributes the same gradient to every token; only the M
    // context slots are returned.
    const double inv = 1.0 / static_cast<double>(seq.tokens.size());
    Matrix grad(dims_.d_token, dims_.context_len);
    for (std::size_t j = 0; j < dims_.context_len; ++j)
        for (std::size_t i = 0; i < dims_.d_token; ++i) grad(i, j) = gm[i] * inv;
    return grad;
}

std::uint64_t FrozenEncoders::weights_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a_matrix(h, w1_);
    h = fnv1a_matrix(h, w2_);
    h = fnv1a_matrix(h, v1_);
    h = fnv1a_matrix(h, v2_);
    h = fnv1a_matrix(h, class_embeddings_);
    h = fnv1a_matrix(h, template_tokens_);
    return h;
}

}  // namespace fedpgp
