#pragma once

#include "fedpgp/matrix.hpp"
#include "fedpgp/rng.hpp"

namespace fedpgp {

// Shared full-rank context matrix p_G (d_token x M); the only learnable
// object that ever crosses the wire.
struct GlobalPrompt {
    Matrix p;
};

// Per-client factor pair whose product is the personalization delta.
// rank(u * v) <= bottleneck by construction.
struct LowRankAdapter {
    Matrix u;  // d_token x b
    Matrix v;  // b x M
    std::size_t bottleneck = 0;

    Matrix delta() const { return matmul(u, v); }
};

struct PersonalizedPrompt {
    Matrix p;  // p_global + u * v, materialized
};

// Gaussian context entries with the given stddev (default 0.02 elsewhere).
GlobalPrompt init_global(Rng& rng, std::size_t d_token, std::size_t context_len, double scale);

// u Gaussian (stddev 1/sqrt(b)), v zero, so the delta vanishes at round 0 and
// the personalized prompt starts exactly at the global one.
LowRankAdapter init_adapter(Rng& rng, std::size_t d_token, std::size_t context_len,
                            std::size_t bottleneck);

PersonalizedPrompt compose(const GlobalPrompt& global, const LowRankAdapter& adapter);

// Plain SGD: param <- param - eta * grad. No momentum, no weight decay.
// Non-finite gradient entries abort the round via NumericalFailure.
void sgd_step(Matrix& param, const Matrix& grad, double eta);

}  // namespace fedpgp
