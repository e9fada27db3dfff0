#pragma once

#include <cstdint>
#include <vector>

#include "fedpgp/matrix.hpp"
#include "fedpgp/numkit.hpp"

namespace fedpgp {

struct EncoderDims {
    std::size_t d_token = 32;    // token embedding dimension
    std::size_t d_feat = 32;     // output representation dimension
    std::size_t d_img = 16;      // raw image-feature dimension
    std::size_t hidden = 48;     // width of the single hidden layer
    std::size_t context_len = 16;  // M, number of learnable context vectors
};

// Ordered token list fed to the text path: M context vectors followed by
// one class embedding.
struct PromptSequence {
    std::vector<Vector> tokens;
};

// Frozen dual encoder standing in for CLIP. Text path
// g(seq) = normalize(W2 tanh(W1 meanpool(seq))), image path
// f(x) = normalize(V2 tanh(V1 x)). All weights are drawn once from the seed
// (Gaussian, stddev 1/sqrt(fan_in)) and never mutated afterwards.
class FrozenEncoders {
public:
    FrozenEncoders(const EncoderDims& dims, std::size_t num_classes, std::uint64_t seed);

    // Explicit-weights constructor for tests that need hand-built encoders.
    FrozenEncoders(const EncoderDims& dims, Matrix w1, Matrix w2, Matrix v1, Matrix v2,
                   Matrix class_embeddings, Matrix template_tokens);

    const EncoderDims& dims() const { return dims_; }
    std::size_t num_classes() const { return class_embeddings_.rows(); }
    std::uint64_t seed() const { return seed_; }

    Vector class_embedding(std::size_t class_id) const;

    // d_token x M; usable directly as a prompt matrix (zero-shot baseline).
    const Matrix& template_tokens() const { return template_tokens_; }

    PromptSequence build_prompt_sequence(const Matrix& prompt, std::size_t class_id) const;

    Vector encode_text(const PromptSequence& seq) const;
    Vector encode_image(const Vector& x) const;

    // g(template tokens + class token); the anchor representation z_C.
    Vector handcrafted_representation(std::size_t class_id) const;

    // Class-averaged variant of z_C: normalized mean of per-class anchors.
    Vector handcrafted_class_averaged() const;

    // Exact reverse-mode gradient of <upstream, encode_text(seq)> with respect
    // to the M context tokens (d_token x M). The class-token gradient exists
    // but is discarded: that slot is frozen.
    Matrix text_grad(const PromptSequence& seq, const Vector& upstream) const;

    // FNV-1a over all weight bytes; used to verify frozen-ness.
    std::uint64_t weights_hash() const;

private:
    void check_shapes() const;
    Vector meanpool(const PromptSequence& seq) const;

    EncoderDims dims_;
    std::uint64_t seed_ = 0;
    Matrix w1_;                 // hidden x d_token
    Matrix w2_;                 // d_feat x hidden
    Matrix v1_;                 // hidden x d_img
    Matrix v2_;                 // d_feat x hidden
    Matrix class_embeddings_;   // num_classes x d_token (one row per class)
    Matrix template_tokens_;    // d_token x M
};

}  // namespace fedpgp
