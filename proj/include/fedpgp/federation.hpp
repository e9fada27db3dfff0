#pragma once

#include <cstdint>
#include <vector>

#include "fedpgp/config.hpp"
#include "fedpgp/data.hpp"
#include "fedpgp/encoders.hpp"
#include "fedpgp/eval.hpp"
#include "fedpgp/losses.hpp"
#include "fedpgp/prompt.hpp"
#include "fedpgp/strategy.hpp"

namespace fedpgp {

// Client-side state. The adapter (or full-rank delta) lives here and only
// here: no message type can carry it off the client.
struct ClientState {
    int id = 0;
    DatasetShard shard;
    GlobalPrompt local_prompt;  // working copy p_{G,i}
    LowRankAdapter adapter;     // fedpgp and its contrastive ablations
    Matrix full_delta;          // full_rank strategy
    Rng rng;                    // batch-shuffling stream, owned by this client
    double last_l_ce = 0.0;
    double last_l_con = 0.0;
};

// The only client-to-server payload: the locally trained global prompt plus
// the shard size that weights it. Keeping the type this narrow is the
// privacy boundary.
struct ClientUpdate {
    int client_id = 0;
    std::size_t num_samples = 0;
    Matrix prompt;
};

struct ServerState {
    GlobalPrompt global;
    int round = 0;
    Rng sampler;
};

struct EpochLoss {
    double l_ce = 0.0;
    double l_con = 0.0;
};

struct LocalTrainResult {
    bool ok = true;
    std::vector<EpochLoss> epoch_losses;  // one entry per epoch, batch means
};

// ceil(rate * N) distinct ids, uniform without replacement from the
// server's sampling stream; returned ascending.
std::vector<int> sample_clients(ServerState& server, int num_clients, double participation_rate);

// E epochs of mini-batch SGD with the strategy's loss. `classes` is the
// protocol's trainable class universe. A non-finite loss or gradient aborts
// the client's round (ok = false); server-side weights renormalize over the
// survivors.
LocalTrainResult local_train(ClientState& client, const GlobalPrompt& broadcast,
                             const SyntheticTask& task, const std::vector<int>& classes,
                             const FrozenEncoders& enc, const ExperimentConfig& cfg,
                             bool receive_broadcast);

Vector aggregation_weights(const std::vector<std::size_t>& counts);

// p_G = sum_i n_i / (sum_j n_j) * p_i, summed in ascending client-id order.
GlobalPrompt aggregate(const std::vector<ClientUpdate>& updates);

// Frozen per-run context shared by every round.
struct ExperimentContext {
    SyntheticTask task;
    FrozenEncoders enc;
    std::vector<int> trainable_classes;
    std::vector<DatasetShard> shards;
    EvalContext eval;

    ExperimentContext(SyntheticTask t, FrozenEncoders e)
        : task(std::move(t)), enc(std::move(e)) {}
};

struct RoundOutcome {
    std::vector<int> selected;
    std::vector<int> failed;
    bool aggregated = false;
};

// sample -> broadcast -> parallel local training -> aggregate. Deterministic
// for a fixed seed independent of the worker count.
RoundOutcome run_round(ServerState& server, std::vector<ClientState>& clients,
                       const ExperimentContext& ctx, const ExperimentConfig& cfg);

// The prompt a client classifies with at evaluation time.
Matrix evaluation_prompt(const ClientState& client, const ServerState& server,
                         const ExperimentContext& ctx, StrategyKind strategy);

std::vector<MetricsRecord> evaluate_round(const ServerState& server,
                                          const std::vector<ClientState>& clients,
                                          const ExperimentContext& ctx,
                                          const ExperimentConfig& cfg, int round);

struct ExperimentResult {
    std::vector<MetricsRecord> metrics;
    Matrix final_global;
    std::vector<ClientState> clients;
    std::vector<int> flagged_rounds;  // rounds where no client survived
    std::uint64_t encoder_hash_before = 0;
    std::uint64_t encoder_hash_after = 0;
};

// Builds the task, shards, encoders and actors from (cfg, seed), then runs
// T rounds with per-round evaluation at the configured stride.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

// Setup pieces exposed for tests and the runner.
ExperimentContext build_context(const ExperimentConfig& cfg, std::uint64_t seed);
ServerState build_server(const ExperimentConfig& cfg, std::uint64_t seed);
std::vector<ClientState> build_clients(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const ExperimentContext& ctx,
                                       const ServerState& server);

}  // namespace fedpgp
