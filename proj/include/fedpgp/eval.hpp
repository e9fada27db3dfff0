#pragma once

#include <optional>
#include <vector>

#include "fedpgp/data.hpp"
#include "fedpgp/encoders.hpp"
#include "fedpgp/losses.hpp"

namespace fedpgp {

constexpr int kAggregateClient = -1;

// Per-round, per-client metrics row; client == kAggregateClient holds the
// unweighted cross-client mean. Accuracy fields are absent where the
// protocol does not produce them; hm is present iff all three accuracies are.
struct MetricsRecord {
    int round = 0;
    int client = kAggregateClient;
    std::optional<double> acc_local;
    std::optional<double> acc_base;
    std::optional<double> acc_novel;
    std::optional<double> hm;
    double l_ce = 0.0;
    double l_con = 0.0;
};

// argmax of class_probabilities; exact ties resolve to the lowest class id.
int classify(const Vector& x, const Matrix& prompt, const std::vector<int>& class_set,
             const FrozenEncoders& enc, double tau_cls);

// Fraction of correctly classified samples. Throws UndefinedMetric on an
// empty sample set.
double accuracy(const SyntheticTask& task, const std::vector<std::size_t>& sample_indices,
                const Matrix& prompt, const std::vector<int>& class_set,
                const FrozenEncoders& enc, double tau_cls);

// 3 / (1/a + 1/b + 1/c); any zero input yields 0 by continuity.
double harmonic_mean(double acc_local, double acc_base, double acc_novel);

enum class ProtocolKind { base_to_novel, personalization, leave_one_domain_out };

// What the federation engine exposes to evaluation: the resolved prompt a
// client classifies with, plus its last-epoch training losses.
struct ClientEvalView {
    int id = 0;
    const DatasetShard* shard = nullptr;
    Matrix prompt;
    double l_ce = 0.0;
    double l_con = 0.0;
};

struct EvalContext {
    ProtocolKind protocol = ProtocolKind::base_to_novel;
    double tau_cls = 0.05;
    // Untrained baseline: the local/base distinction collapses, so acc_local
    // is computed over the base universe.
    bool untrained_prompts = false;
    BaseNovelSplit split;                                  // base_to_novel
    std::vector<std::vector<std::size_t>> personal_tests;  // personalization
    std::vector<std::size_t> target_test;                  // leave_one_domain_out
};

// Distribute the task's test samples across clients so every client's test
// label mix matches its training shard (per-class largest-remainder quotas).
std::vector<std::vector<std::size_t>> personalization_test_split(
    const SyntheticTask& task, const std::vector<DatasetShard>& shards);

std::vector<MetricsRecord> evaluate_protocol(const EvalContext& ctx, const SyntheticTask& task,
                                             const FrozenEncoders& enc,
                                             const std::vector<ClientEvalView>& clients,
                                             int round);

}  // namespace fedpgp
