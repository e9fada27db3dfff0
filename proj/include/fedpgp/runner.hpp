#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpgp/config.hpp"
#include "fedpgp/federation.hpp"

namespace fedpgp {

std::uint64_t fnv1a(const std::string& bytes);

// One JSON object per (round, client) line; the aggregate row uses
// client = "aggregate". Byte-identical across reruns of the same seed.
std::string metrics_to_jsonl(const std::vector<MetricsRecord>& records);

// Final state snapshot: (round, p_G, per-client personalization terms).
// Raw little-endian doubles; round-trips bit-exactly.
struct CheckpointClient {
    int id = 0;
    std::uint8_t kind = 0;  // 0 none, 1 low-rank, 2 full delta
    LowRankAdapter adapter;
    Matrix full_delta;
};

struct Checkpoint {
    std::uint64_t seed = 0;
    std::uint32_t round = 0;
    Matrix global;
    std::vector<CheckpointClient> clients;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
Checkpoint make_checkpoint(const ExperimentConfig& cfg, std::uint64_t seed,
                           const ExperimentResult& result);

struct RunOptions {
    bool force = false;  // allow writing into a nonempty directory
};

// Refuses a nonempty output directory unless forced.
void prepare_output_dir(const std::string& path, bool force);

struct SeedRunOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsRecord final_aggregate;
};

// Runs one seed and writes metrics.jsonl, checkpoint.bin and manifest.json
// into `dir`.
SeedRunOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir);

// `run` verb: one subdirectory per seed plus a summary.csv. Returns the
// process exit status.
int run_command(const ExperimentConfig& cfg, const RunOptions& opt);

// `sweep` verb over mu, b or shots: cross-product of values and the shared
// seed list, one run directory per value, a single summary.csv on top.
int sweep_command(const ExperimentConfig& cfg, const std::string& parameter,
                  const std::vector<std::string>& values, const RunOptions& opt);

}  // namespace fedpgp
