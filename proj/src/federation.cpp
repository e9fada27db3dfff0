#include "fedpgp/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace fedpgp {

namespace {

// Seed-derivation salts; fixed so every run of (cfg, seed) rebuilds the
// identical world.
constexpr std::uint64_t kTaskSalt = 1;
constexpr std::uint64_t kEncoderSalt = 2;
constexpr std::uint64_t kSamplerSalt = 3;
constexpr std::uint64_t kPromptSalt = 4;
constexpr std::uint64_t kPartitionSalt = 5;
constexpr std::uint64_t kClientSaltBase = 1000;
// Adapter init draws come from a separate stream so the batch-shuffling
// sequence is identical across strategies with and without adapters.
constexpr std::uint64_t kAdapterSaltBase = 1u << 20;

std::vector<int> all_class_ids(const SyntheticTask& task) {
    std::vector<int> ids(task.num_classes);
    for (int k = 0; k < task.num_classes; ++k) ids[k] = k;
    return ids;
}

TrainingBatch make_batch(const SyntheticTask& task, const std::vector<std::size_t>& order,
                         std::size_t begin, std::size_t end) {
    TrainingBatch batch;
    batch.features.reserve(end - begin);
    batch.labels.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = task.samples[order[i]];
        batch.features.push_back(&s.x);
        batch.labels.push_back(s.label);
    }
    return batch;
}

ContrastKind contrast_kind(StrategyKind strategy) {
    switch (strategy) {
        case StrategyKind::no_positive: return ContrastKind::no_positive;
        case StrategyKind::no_negative: return ContrastKind::no_negative;
        default: return ContrastKind::standard;
    }
}

}  // namespace

std::vector<int> sample_clients(ServerState& server, int num_clients, double participation_rate) {
    if (!(participation_rate > 0.0) || participation_rate > 1.0) {
        throw InvalidParameter("sample_clients: participation rate must be in (0, 1]");
    }
    const int take = std::min(
        num_clients, static_cast<int>(std::ceil(participation_rate * double(num_clients))));
    std::vector<int> ids(num_clients);
    for (int i = 0; i < num_clients; ++i) ids[i] = i;
    // Partial Fisher-Yates: exactly `take` draws from the sampling stream.
    for (int k = 0; k < take; ++k) {
        const int j = k + static_cast<int>(server.sampler.below(std::uint32_t(num_clients - k)));
        std::swap(ids[k], ids[j]);
    }
    ids.resize(take);
    std::sort(ids.begin(), ids.end());
    return ids;
}

LocalTrainResult local_train(ClientState& client, const GlobalPrompt& broadcast,
                             const SyntheticTask& task, const std::vector<int>& classes,
                             const FrozenEncoders& enc, const ExperimentConfig& cfg,
                             bool receive_broadcast) {
    if (cfg.epochs < 1) throw InvalidParameter("local_train: epochs must be >= 1");
    if (receive_broadcast) client.local_prompt = broadcast;  // by value, never aliased

    LocalTrainResult result;
    if (cfg.strategy == StrategyKind::zero_shot) return result;

    const LossConfig loss_cfg = cfg.loss_config();
    const ContrastKind kind = contrast_kind(cfg.strategy);
    const bool update = cfg.eta > 0.0;

    std::vector<std::size_t> order = client.shard.indices;
    try {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            client.rng.shuffle(order);
            EpochLoss epoch_loss;
            std::size_t batches = 0;
            for (std::size_t begin = 0; begin < order.size();
                 begin += std::size_t(cfg.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), begin + std::size_t(cfg.batch_size));
                const TrainingBatch batch = make_batch(task, order, begin, end);

                switch (cfg.strategy) {
                    case StrategyKind::promptfl:
                    case StrategyKind::local_only: {
                        auto ce = cross_entropy_loss(batch, client.local_prompt.p, classes, enc,
                                                     cfg.tau_cls);
                        if (!std::isfinite(ce.loss)) {
                            throw NumericalFailure("local_train: non-finite loss");
                        }
                        if (update) sgd_step(client.local_prompt.p, ce.grad, cfg.eta);
                        epoch_loss.l_ce += ce.loss;
                        break;
                    }
                    case StrategyKind::full_rank: {
                        const Matrix personal = client.local_prompt.p + client.full_delta;
                        auto comp = composite_loss(batch, client.local_prompt.p, personal, classes,
                                                   enc, loss_cfg, ContrastKind::standard);
                        // The delta takes the identical personal-path gradient
                        // the global prompt takes; nothing constrains it.
                        if (update) {
                            const Matrix grad_global =
                                comp.grad_personal + comp.grad_global_direct;
                            sgd_step(client.local_prompt.p, grad_global, cfg.eta);
                            sgd_step(client.full_delta, comp.grad_personal, cfg.eta);
                        }
                        epoch_loss.l_ce += comp.l_ce;
                        epoch_loss.l_con += comp.l_con;
                        break;
                    }
                    default: {  // fedpgp, no_positive, no_negative
                        auto report = total_loss(batch, client.local_prompt, client.adapter,
                                                 classes, enc, loss_cfg, kind);
                        if (update) {
                            sgd_step(client.local_prompt.p, report.grad_global, cfg.eta);
                            if (!cfg.freeze_adapter) {
                                sgd_step(client.adapter.u, report.grad_u, cfg.eta);
                                sgd_step(client.adapter.v, report.grad_v, cfg.eta);
                            }
                        }
                        epoch_loss.l_ce += report.l_ce;
                        epoch_loss.l_con += report.l_con;
                        break;
                    }
                }
                ++batches;
            }
            if (batches > 0) {
                epoch_loss.l_ce /= double(batches);
                epoch_loss.l_con /= double(batches);
            }
            result.epoch_losses.push_back(epoch_loss);
        }
    } catch (const NumericalFailure&) {
        result.ok = false;
        return result;
    }

    if (!result.epoch_losses.empty()) {
        client.last_l_ce = result.epoch_losses.back().l_ce;
        client.last_l_con = result.epoch_losses.back().l_con;
    }
    return result;
}

Vector aggregation_weights(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw NoParticipants("aggregation_weights: empty participant set");
    std::size_t total = 0;
    for (std::size_t n : counts) {
        if (n == 0) throw InvalidParameter("aggregation_weights: client with zero samples");
        total += n;
    }
    Vector weights(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        weights[i] = double(counts[i]) / double(total);
    }
    return weights;
}

GlobalPrompt aggregate(const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) throw NoParticipants("aggregate: no client updates");
    for (std::size_t i = 1; i < updates.size(); ++i) {
        require_same_shape(updates[0].prompt, updates[i].prompt, "aggregate");
        if (updates[i - 1].client_id >= updates[i].client_id) {
            throw InvalidParameter("aggregate: updates must be in ascending client-id order");
        }
    }
    std::vector<std::size_t> counts;
    counts.reserve(updates.size());
    for (const auto& u : updates) counts.push_back(u.num_samples);
    const Vector weights = aggregation_weights(counts);

    // Anchored form of the weighted mean: p = p_0 + sum_i w_i (p_i - p_0),
    // in ascending client-id order. Identical inputs aggregate to themselves
    // exactly, which the plain sum of w_i * p_i cannot guarantee.
    Matrix p = updates[0].prompt;
    for (std::size_t i = 1; i < updates.size(); ++i) {
        const Matrix& q = updates[i].prompt;
        for (std::size_t k = 0; k < p.size(); ++k) {
            p.data()[k] += weights[i] * (q.data()[k] - updates[0].prompt.data()[k]);
        }
    }
    if (!all_finite(p)) throw NumericalFailure("aggregate: non-finite aggregated prompt");
    return GlobalPrompt{std::move(p)};
}

RoundOutcome run_round(ServerState& server, std::vector<ClientState>& clients,
                       const ExperimentContext& ctx, const ExperimentConfig& cfg) {
    RoundOutcome outcome;
    server.round += 1;

    if (!strategy_trains(cfg.strategy)) return outcome;  // zero_shot: frozen everywhere

    outcome.selected = sample_clients(server, int(clients.size()), cfg.participation);
    // local_only clients take the initial broadcast and never another one.
    const bool receive_broadcast = strategy_aggregates(cfg.strategy) || server.round == 1;

    std::vector<LocalTrainResult> results(outcome.selected.size());
    const int workers = std::max(1, std::min<int>(cfg.workers, int(outcome.selected.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < outcome.selected.size(); ++i) {
            results[i] = local_train(clients[outcome.selected[i]], server.global, ctx.task,
                                     ctx.trainable_classes, ctx.enc, cfg, receive_broadcast);
        }
    } else {
        // Each selected client is owned by exactly one worker; shared state
        // (task, encoders, broadcast) is read-only.
        std::atomic<std::size_t> cursor{0};
        const auto worker_count = static_cast<std::size_t>(workers);
        std::vector<std::exception_ptr> errors(worker_count);
        std::vector<std::thread> pool;
        pool.reserve(worker_count);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (;;) {
                        const std::size_t i = cursor.fetch_add(1);
                        if (i >= outcome.selected.size()) break;
                        results[i] =
                            local_train(clients[outcome.selected[i]], server.global, ctx.task,
                                        ctx.trainable_classes, ctx.enc, cfg, receive_broadcast);
                    }
                } catch (...) {
                    errors[std::size_t(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    if (!strategy_aggregates(cfg.strategy)) return outcome;

    std::vector<ClientUpdate> updates;
    updates.reserve(outcome.selected.size());
    for (std::size_t i = 0; i < outcome.selected.size(); ++i) {
        const int id = outcome.selected[i];
        // Ownership audit: state slots must still belong to their clients,
        // and only the prompt matrix crosses to the server (ClientUpdate has
        // no field that could carry an adapter).
        if (clients[std::size_t(id)].id != id) {
            throw Error("run_round: client state ownership violated");
        }
        if (!results[i].ok) {
            outcome.failed.push_back(id);
            continue;
        }
        updates.push_back(
            ClientUpdate{id, clients[id].shard.indices.size(), clients[id].local_prompt.p});
    }
    if (updates.empty()) return outcome;  // flagged by the caller; p_G unchanged

    server.global = aggregate(updates);
    outcome.aggregated = true;
    return outcome;
}

Matrix evaluation_prompt(const ClientState& client, const ServerState& server,
                         const ExperimentContext& ctx, StrategyKind strategy) {
    switch (strategy) {
        case StrategyKind::zero_shot:
            return ctx.enc.template_tokens();
        case StrategyKind::local_only:
            return client.local_prompt.p;
        case StrategyKind::promptfl:
            return server.global.p;
        case StrategyKind::full_rank:
            return server.global.p + client.full_delta;
        default:  // fedpgp, no_positive, no_negative
            return server.global.p + client.adapter.delta();
    }
}

std::vector<MetricsRecord> evaluate_round(const ServerState& server,
                                          const std::vector<ClientState>& clients,
                                          const ExperimentContext& ctx,
                                          const ExperimentConfig& cfg, int round) {
    std::vector<ClientEvalView> views;
    views.reserve(clients.size());
    for (const auto& client : clients) {
        ClientEvalView v;
        v.id = client.id;
        v.shard = &client.shard;
        v.prompt = evaluation_prompt(client, server, ctx, cfg.strategy);
        v.l_ce = client.last_l_ce;
        v.l_con = client.last_l_con;
        views.push_back(std::move(v));
    }
    return evaluate_protocol(ctx.eval, ctx.task, ctx.enc, views, round);
}

ExperimentContext build_context(const ExperimentConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    SyntheticTask task = generate_task(cfg.task_params(), mix_seed(seed, kTaskSalt));
    FrozenEncoders enc(cfg.encoder_dims(), std::size_t(cfg.task_classes),
                       mix_seed(seed, kEncoderSalt));
    ExperimentContext ctx(std::move(task), std::move(enc));

    ctx.eval.tau_cls = cfg.tau_cls;
    ctx.eval.protocol = cfg.protocol;
    ctx.eval.untrained_prompts = cfg.strategy == StrategyKind::zero_shot;

    std::vector<DatasetShard> shards;
    switch (cfg.partition) {
        case PartitionKind::pathological:
            shards = pathological_partition(ctx.task, cfg.num_clients);
            break;
        case PartitionKind::dirichlet: {
            Rng rng(mix_seed(seed, kPartitionSalt));
            shards = dirichlet_partition(ctx.task, cfg.num_clients, cfg.alpha, rng);
            break;
        }
        case PartitionKind::iid:
            shards = iid_partition(ctx.task, cfg.num_clients);
            break;
        case PartitionKind::leave_one_domain_out: {
            DomainHoldout holdout =
                leave_one_domain_out(ctx.task, cfg.target_domain, cfg.num_clients);
            shards = std::move(holdout.shards);
            ctx.eval.target_test = std::move(holdout.target_indices);
            break;
        }
    }
    apply_shot_cap(shards, ctx.task, cfg.shots);

    switch (cfg.protocol) {
        case ProtocolKind::base_to_novel:
            ctx.eval.split = base_novel_split(ctx.task);
            ctx.trainable_classes = ctx.eval.split.base_classes;
            break;
        case ProtocolKind::personalization:
            ctx.eval.personal_tests = personalization_test_split(ctx.task, shards);
            ctx.trainable_classes = all_class_ids(ctx.task);
            break;
        case ProtocolKind::leave_one_domain_out:
            ctx.trainable_classes = all_class_ids(ctx.task);
            break;
    }

    // Shards move into the clients later; the context keeps its own copy so
    // evaluation can inspect them.
    ctx.shards = std::move(shards);
    return ctx;
}

ServerState build_server(const ExperimentConfig& cfg, std::uint64_t seed) {
    Rng prompt_rng(mix_seed(seed, kPromptSalt));
    return ServerState{
        init_global(prompt_rng, std::size_t(cfg.d_token), std::size_t(cfg.context_len),
                    cfg.prompt_scale),
        0, Rng(mix_seed(seed, kSamplerSalt))};
}

std::vector<ClientState> build_clients(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const ExperimentContext& ctx, const ServerState& server) {
    std::vector<ClientState> clients;
    clients.reserve(ctx.shards.size());
    for (std::size_t i = 0; i < ctx.shards.size(); ++i) {
        Rng rng(mix_seed(seed, kClientSaltBase + i));
        ClientState c{int(i),
                      ctx.shards[i],
                      GlobalPrompt{server.global.p},
                      LowRankAdapter{},
                      Matrix(),
                      std::move(rng)};
        if (strategy_has_low_rank_adapter(cfg.strategy)) {
            Rng adapter_rng(mix_seed(seed, kAdapterSaltBase + i));
            c.adapter = init_adapter(adapter_rng, std::size_t(cfg.d_token),
                                     std::size_t(cfg.context_len), std::size_t(cfg.bottleneck));
        } else if (cfg.strategy == StrategyKind::full_rank) {
            c.full_delta = Matrix(std::size_t(cfg.d_token), std::size_t(cfg.context_len), 0.0);
        }
        clients.push_back(std::move(c));
    }
    return clients;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
    ExperimentContext ctx = build_context(cfg, seed);
    ServerState server = build_server(cfg, seed);
    std::vector<ClientState> clients = build_clients(cfg, seed, ctx, server);

    ExperimentResult result;
    result.encoder_hash_before = ctx.enc.weights_hash();

    for (int t = 1; t <= cfg.rounds; ++t) {
        const RoundOutcome outcome = run_round(server, clients, ctx, cfg);
        if (strategy_aggregates(cfg.strategy) && !outcome.aggregated) {
            result.flagged_rounds.push_back(t);
        }
        if (t % cfg.eval_stride == 0 || t == cfg.rounds) {
            auto records = evaluate_round(server, clients, ctx, cfg, t);
            result.metrics.insert(result.metrics.end(), records.begin(), records.end());
        }
    }

    result.encoder_hash_after = ctx.enc.weights_hash();
    result.final_global = server.global.p;
    result.clients = std::move(clients);
    return result;
}

}  // namespace fedpgp
