#pragma once

#include <string>

#include "fedpgp/errors.hpp"

namespace fedpgp {

// Training strategies: the method itself, the comparison baselines, and the
// ablation variants.
//   fedpgp      - global prompt + low-rank adapter + contrastive term
//   promptfl    - federated prompt only, cross-entropy only
//   local_only  - per-client prompt, no aggregation, no broadcast after round 0
//   zero_shot   - frozen handcrafted template, no training at all
//   full_rank   - adapter replaced by a free full matrix delta
//   no_positive - contrastive term replaced by 1 - sim(z_G, z_i)
//   no_negative - contrastive term replaced by sim(z_G, z_C)
enum class StrategyKind {
    fedpgp,
    promptfl,
    local_only,
    zero_shot,
    full_rank,
    no_positive,
    no_negative,
};

inline const char* strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::fedpgp: return "fedpgp";
        case StrategyKind::promptfl: return "promptfl";
        case StrategyKind::local_only: return "local_only";
        case StrategyKind::zero_shot: return "zero_shot";
        case StrategyKind::full_rank: return "full_rank";
        case StrategyKind::no_positive: return "no_positive";
        case StrategyKind::no_negative: return "no_negative";
    }
    return "unknown";
}

inline StrategyKind strategy_from_name(const std::string& name) {
    for (StrategyKind k :
         {StrategyKind::fedpgp, StrategyKind::promptfl, StrategyKind::local_only,
          StrategyKind::zero_shot, StrategyKind::full_rank, StrategyKind::no_positive,
          StrategyKind::no_negative}) {
        if (name == strategy_name(k)) return k;
    }
    throw ConfigError("unknown strategy '" + name + "'");
}

// Does the strategy train a client-local personalization term?
inline bool strategy_has_low_rank_adapter(StrategyKind kind) {
    return kind == StrategyKind::fedpgp || kind == StrategyKind::no_positive ||
           kind == StrategyKind::no_negative;
}

inline bool strategy_trains(StrategyKind kind) { return kind != StrategyKind::zero_shot; }

inline bool strategy_aggregates(StrategyKind kind) {
    return kind != StrategyKind::zero_shot && kind != StrategyKind::local_only;
}

}  // namespace fedpgp
