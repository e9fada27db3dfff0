#pragma once

#include <vector>

#include "fedpgp/encoders.hpp"
#include "fedpgp/prompt.hpp"

namespace fedpgp {

struct LossConfig {
    double mu = 1.0;        // weight of the contrastive term
    double tau_cls = 0.05;  // softmax temperature of the classifier
    double tau_con = 1.0;   // softmax temperature of the contrastive loss
    bool zc_class_averaged = false;  // use the class-averaged anchor instead of per-class
    bool negate_pos_ablation = false;  // flip the sign of the positive-only ablation loss
};

// Which contrastive term the strategy trains with. `standard` is the
// two-term softmax; the ablations keep only one pair.
enum class ContrastKind { standard, no_positive, no_negative };

// References into caller-owned raw image features (d_img each).
struct TrainingBatch {
    std::vector<const Vector*> features;
    std::vector<int> labels;

    std::size_t size() const { return features.size(); }
};

// softmax over { cos(f(x), g(P_c)) / tau : c in classes }, in class order.
Vector class_probabilities(const Vector& x, const Matrix& prompt, const std::vector<int>& classes,
                           const FrozenEncoders& enc, double tau_cls);

struct CrossEntropyResult {
    double loss = 0.0;
    Matrix grad;  // w.r.t. the prompt matrix, d_token x M
};

CrossEntropyResult cross_entropy_loss(const TrainingBatch& batch, const Matrix& prompt,
                                      const std::vector<int>& classes, const FrozenEncoders& enc,
                                      double tau_cls);

struct ContrastiveResult {
    double loss = 0.0;
    Vector grad_z_global;    // w.r.t. z_G
    Vector grad_z_personal;  // w.r.t. z_i; the anchor z_C is a frozen path
};

// -log[ exp(sim(z_G,z_C)/tau) / (exp(sim(z_G,z_C)/tau) + exp(sim(z_G,z_i)/tau)) ]
ContrastiveResult contrastive_loss(const Vector& z_global, const Vector& z_anchor,
                                   const Vector& z_personal, double tau_con);

// no_positive: 1 - sim(z_G, z_i). no_negative: sim(z_G, z_C), optionally
// negated via the config flag.
ContrastiveResult ablation_loss(ContrastKind kind, const Vector& z_global, const Vector& z_anchor,
                                const Vector& z_personal, bool negate_pos);

// Loss and gradients expressed against the two prompt matrices. Strategies
// that personalize differently (low-rank vs full matrix) apply their own
// chain rule to grad_personal afterwards.
struct CompositeResult {
    double l_ce = 0.0;
    double l_con = 0.0;
    double total = 0.0;
    Matrix grad_personal;       // d total / d p_i  (all paths through p_i)
    Matrix grad_global_direct;  // d (mu * l_con) / d p_G via the z_G path only
};

CompositeResult composite_loss(const TrainingBatch& batch, const Matrix& p_global,
                               const Matrix& p_personal, const std::vector<int>& classes,
                               const FrozenEncoders& enc, const LossConfig& cfg, ContrastKind kind);

struct LossReport {
    double l_ce = 0.0;
    double l_con = 0.0;
    double total = 0.0;
    Matrix grad_global;  // d_token x M
    Matrix grad_u;       // d_token x b
    Matrix grad_v;       // b x M
};

// Combined objective through the personalized prompt p_G + U V, with the
// contrastive term averaged over the classes present in the batch.
LossReport total_loss(const TrainingBatch& batch, const GlobalPrompt& global,
                      const LowRankAdapter& adapter, const std::vector<int>& classes,
                      const FrozenEncoders& enc, const LossConfig& cfg,
                      ContrastKind kind = ContrastKind::standard);

}  // namespace fedpgp
