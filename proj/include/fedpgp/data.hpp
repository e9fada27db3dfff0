#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpgp/matrix.hpp"
#include "fedpgp/rng.hpp"

namespace fedpgp {

struct Sample {
    Vector x;    // raw feature, d_img
    int label = 0;
    int domain = 0;
};

// Synthetic classification task: one prototype per class, one additive
// offset per domain, Gaussian sample noise. Stands in for the real image
// datasets at desk scale.
struct SyntheticTask {
    int num_classes = 0;
    int num_domains = 0;
    double sigma = 0.0;
    std::vector<Vector> prototypes;      // num_classes vectors, d_img
    std::vector<Vector> domain_offsets;  // num_domains vectors, d_img
    std::vector<Sample> samples;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

struct TaskParams {
    int num_classes = 10;
    int num_domains = 1;
    int samples_per_class_per_domain = 20;
    std::size_t d_img = 16;
    double sigma = 0.25;
    // When set, prototypes are rescaled until their minimum pairwise
    // distance exceeds 4 sigma, keeping classes separable.
    bool separable = true;
};

SyntheticTask generate_task(const TaskParams& params, std::uint64_t seed);

struct DatasetShard {
    int owner = 0;
    std::vector<std::size_t> indices;  // into SyntheticTask::samples
    std::vector<int> class_set;        // ascending, classes present in the shard
};

struct BaseNovelSplit {
    std::vector<int> base_classes;   // first ceil(K/2) ids
    std::vector<int> novel_classes;  // the rest; never trained on
};

BaseNovelSplit base_novel_split(const SyntheticTask& task);

// Non-overlapping base classes round-robin across clients; each client gets
// every training sample of its classes.
std::vector<DatasetShard> pathological_partition(const SyntheticTask& task, int num_clients);

// Per-class proportions from a symmetric Dirichlet(alpha), samples assigned
// multinomially; empty shards repaired by moving one sample from the largest.
std::vector<DatasetShard> dirichlet_partition(const SyntheticTask& task, int num_clients,
                                              double alpha, Rng& rng);

// Balanced label-stratified split, client j takes every N-th sample.
std::vector<DatasetShard> iid_partition(const SyntheticTask& task, int num_clients);

struct DomainHoldout {
    std::vector<DatasetShard> shards;        // one source domain per client
    std::vector<std::size_t> target_indices; // the full held-out domain
    int target_domain = 0;
};

DomainHoldout leave_one_domain_out(const SyntheticTask& task, int target_domain, int num_clients);

// Keep at most `shots` training samples per (client, class); 0 disables.
void apply_shot_cap(std::vector<DatasetShard>& shards, const SyntheticTask& task, int shots);

// Flat text round-trip (one line per sample: domain, class, features) for
// cross-implementation comparisons.
std::string export_task(const SyntheticTask& task);
SyntheticTask import_task(const std::string& text);

double gamma_draw(Rng& rng, double alpha);

}  // namespace fedpgp
