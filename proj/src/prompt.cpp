#include "fedpgp/prompt.hpp"

#include <algorithm>
#include <cmath>

namespace fedpgp {

GlobalPrompt init_global(Rng& rng, std::size_t d_token, std::size_t context_len, double scale) {
    if (!(scale > 0.0)) throw InvalidParameter("init_global: scale must be positive");
    if (d_token == 0 || context_len == 0) throw InvalidParameter("init_global: empty prompt shape");
    return GlobalPrompt{Matrix::gaussian(d_token, context_len, rng, scale)};
}

LowRankAdapter init_adapter(Rng& rng, std::size_t d_token, std::size_t context_len,
                            std::size_t bottleneck) {
    const std::size_t cap = std::min(d_token, context_len);
    if (bottleneck < 1 || bottleneck > cap) {
        throw InvalidParameter("init_adapter: bottleneck " + std::to_string(bottleneck) +
                               " outside [1, " + std::to_string(cap) + "]");
    }
    LowRankAdapter a;
    a.bottleneck = bottleneck;
    a.u = Matrix::gaussian(d_token, bottleneck, rng, 1.0 / std::sqrt(double(bottleneck)));
    a.v = Matrix(bottleneck, context_len, 0.0);
    return a;
}

PersonalizedPrompt compose(const GlobalPrompt& global, const LowRankAdapter& adapter) {
    if (adapter.u.rows() != global.p.rows() || adapter.v.cols() != global.p.cols() ||
        adapter.u.cols() != adapter.v.rows()) {
        throw ShapeError("compose: adapter factors do not match the global prompt");
    }
    return PersonalizedPrompt{global.p + adapter.delta()};
}

void sgd_step(Matrix& param, const Matrix& grad, double eta) {
    if (!(eta > 0.0)) throw InvalidParameter("sgd_step: eta must be positive");
    require_same_shape(param, grad, "sgd_step");
    if (!all_finite(grad)) throw NumericalFailure("sgd_step: non-finite gradient");
    for (std::size_t i = 0; i < param.size(); ++i) param.data()[i] -= eta * grad.data()[i];
}

}  // namespace fedpgp
