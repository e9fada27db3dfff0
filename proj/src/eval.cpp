#include "fedpgp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

#include "fedpgp/numkit.hpp"

namespace fedpgp {

namespace {

bool contains(const std::vector<int>& sorted_set, int value) {
    return std::binary_search(sorted_set.begin(), sorted_set.end(), value);
}

// Text features are fixed per (prompt, class set); hoist them out of the
// per-sample loop.
std::vector<Vector> text_features(const Matrix& prompt, const std::vector<int>& class_set,
                                  const FrozenEncoders& enc) {
    std::vector<Vector> z;
    z.reserve(class_set.size());
    for (int c : class_set) {
        z.push_back(enc.encode_text(enc.build_prompt_sequence(prompt, static_cast<std::size_t>(c))));
    }
    return z;
}

int argmax_class(const Vector& z_img, const std::vector<Vector>& z_text,
                 const std::vector<int>& class_set) {
    double best = -std::numeric_limits<double>::infinity();
    int best_class = 0;
    for (std::size_t i = 0; i < z_text.size(); ++i) {
        const double score = dot(z_img, z_text[i]);
        if (score > best || (score == best && class_set[i] < best_class)) {
            best = score;
            best_class = class_set[i];
        }
    }
    return best_class;
}

std::vector<std::size_t> filter_by_labels(const SyntheticTask& task,
                                          const std::vector<std::size_t>& indices,
                                          const std::vector<int>& labels) {
    std::vector<std::size_t> out;
    for (std::size_t idx : indices) {
        if (contains(labels, task.samples[idx].label)) out.push_back(idx);
    }
    return out;
}

std::optional<double> try_accuracy(const SyntheticTask& task,
                                   const std::vector<std::size_t>& indices, const Matrix& prompt,
                                   const std::vector<int>& class_set, const FrozenEncoders& enc,
                                   double tau_cls) {
    if (indices.empty() || class_set.empty()) return std::nullopt;
    return accuracy(task, indices, prompt, class_set, enc, tau_cls);
}

void set_difference_sorted(const std::vector<int>& a, const std::vector<int>& b,
                           std::vector<int>& out) {
    out.clear();
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
}

MetricsRecord aggregate_records(const std::vector<MetricsRecord>& per_client, int round) {
    MetricsRecord agg;
    agg.round = round;
    agg.client = kAggregateClient;
    // Unweighted mean over the clients that carry the field; a client with an
    // empty test slice simply drops out of that column.
    const auto mean_of = [&](std::optional<double> MetricsRecord::*field) -> std::optional<double> {
        double sum = 0.0;
        std::size_t present = 0;
        for (const auto& r : per_client) {
            if (!(r.*field).has_value()) continue;
            sum += *(r.*field);
            ++present;
        }
        if (present == 0) return std::nullopt;
        return sum / double(present);
    };
    agg.acc_local = mean_of(&MetricsRecord::acc_local);
    agg.acc_base = mean_of(&MetricsRecord::acc_base);
    agg.acc_novel = mean_of(&MetricsRecord::acc_novel);
    agg.hm = mean_of(&MetricsRecord::hm);
    if (!per_client.empty()) {
        double ce = 0.0;
        double con = 0.0;
        for (const auto& r : per_client) {
            ce += r.l_ce;
            con += r.l_con;
        }
        agg.l_ce = ce / double(per_client.size());
        agg.l_con = con / double(per_client.size());
    }
    return agg;
}

}  // namespace

int classify(const Vector& x, const Matrix& prompt, const std::vector<int>& class_set,
             const FrozenEncoders& enc, double tau_cls) {
    if (class_set.empty()) throw InvalidParameter("classify: empty class set");
    if (!(tau_cls > 0.0)) throw InvalidParameter("classify: tau_cls must be positive");
    const Vector z_img = enc.encode_image(x);
    return argmax_class(z_img, text_features(prompt, class_set, enc), class_set);
}

double accuracy(const SyntheticTask& task, const std::vector<std::size_t>& sample_indices,
                const Matrix& prompt, const std::vector<int>& class_set,
                const FrozenEncoders& enc, double tau_cls) {
    if (sample_indices.empty()) throw UndefinedMetric("accuracy: empty test set");
    if (class_set.empty()) throw InvalidParameter("accuracy: empty class set");
    // Predictions are temperature-invariant; the parameter is validated only.
    if (!(tau_cls > 0.0)) throw InvalidParameter("accuracy: tau_cls must be positive");
    std::vector<int> sorted_set = class_set;
    std::sort(sorted_set.begin(), sorted_set.end());

    const std::vector<Vector> z_text = text_features(prompt, class_set, enc);
    std::size_t correct = 0;
    for (std::size_t idx : sample_indices) {
        const Sample& s = task.samples[idx];
        if (!contains(sorted_set, s.label)) {
            throw UnknownClass("accuracy: sample label " + std::to_string(s.label) +
                               " outside the class set");
        }
        const Vector z_img = enc.encode_image(s.x);
        if (argmax_class(z_img, z_text, class_set) == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(sample_indices.size());
}

double harmonic_mean(double acc_local, double acc_base, double acc_novel) {
    for (double a : {acc_local, acc_base, acc_novel}) {
        if (!(a >= 0.0) || a > 1.0) {
            throw InvalidParameter("harmonic_mean: accuracy outside [0, 1]");
        }
    }
    if (acc_local == 0.0 || acc_base == 0.0 || acc_novel == 0.0) return 0.0;
    return 3.0 / (1.0 / acc_local + 1.0 / acc_base + 1.0 / acc_novel);
}

std::vector<std::vector<std::size_t>> personalization_test_split(
    const SyntheticTask& task, const std::vector<DatasetShard>& shards) {
    const int num_clients = static_cast<int>(shards.size());
    std::vector<std::vector<std::size_t>> out(num_clients);

    for (int k = 0; k < task.num_classes; ++k) {
        std::vector<std::size_t> class_tests;
        for (std::size_t idx : task.test_indices) {
            if (task.samples[idx].label == k) class_tests.push_back(idx);
        }
        if (class_tests.empty()) continue;

        std::vector<std::size_t> train_count(num_clients, 0);
        std::size_t total = 0;
        for (int c = 0; c < num_clients; ++c) {
            for (std::size_t idx : shards[c].indices) {
                if (task.samples[idx].label == k) ++train_count[c];
            }
            total += train_count[c];
        }
        if (total == 0) continue;

        // Largest-remainder quotas; ties resolve to the lowest client id.
        std::vector<std::size_t> quota(num_clients, 0);
        std::vector<std::pair<double, int>> remainders;
        std::size_t assigned = 0;
        for (int c = 0; c < num_clients; ++c) {
            const double exact = double(class_tests.size()) * double(train_count[c]) / double(total);
            quota[c] = static_cast<std::size_t>(exact);
            assigned += quota[c];
            remainders.emplace_back(exact - double(quota[c]), c);
        }
        std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < class_tests.size(); ++r, ++assigned) {
            ++quota[remainders[r % remainders.size()].second];
        }

        std::size_t cursor = 0;
        for (int c = 0; c < num_clients; ++c) {
            for (std::size_t q = 0; q < quota[c]; ++q) out[c].push_back(class_tests[cursor++]);
        }
    }
    return out;
}

std::vector<MetricsRecord> evaluate_protocol(const EvalContext& ctx, const SyntheticTask& task,
                                             const FrozenEncoders& enc,
                                             const std::vector<ClientEvalView>& clients,
                                             int round) {
    std::vector<MetricsRecord> records;
    records.reserve(clients.size() + 1);

    switch (ctx.protocol) {
        case ProtocolKind::base_to_novel: {
            if (ctx.split.base_classes.empty() || ctx.split.novel_classes.empty()) {
                throw InvalidParameter("evaluate_protocol: base/novel split missing");
            }
            // Novel-class hygiene: nothing novel may ever have been trained on.
            for (const auto& client : clients) {
                if (client.shard == nullptr) continue;
                for (int c : client.shard->class_set) {
                    if (contains(ctx.split.novel_classes, c)) {
                        throw InvalidParameter("evaluate_protocol: novel class " +
                                               std::to_string(c) + " found in a training shard");
                    }
                }
            }
            const std::vector<std::size_t> base_tests =
                filter_by_labels(task, task.test_indices, ctx.split.base_classes);
            const std::vector<std::size_t> novel_tests =
                filter_by_labels(task, task.test_indices, ctx.split.novel_classes);

            for (const auto& client : clients) {
                MetricsRecord r;
                r.round = round;
                r.client = client.id;
                r.l_ce = client.l_ce;
                r.l_con = client.l_con;

                std::vector<int> local_classes =
                    client.shard != nullptr ? client.shard->class_set : std::vector<int>{};
                std::sort(local_classes.begin(), local_classes.end());

                if (ctx.untrained_prompts || local_classes.empty()) {
                    // No client-specific training happened; local == base.
                    r.acc_base = try_accuracy(task, base_tests, client.prompt,
                                              ctx.split.base_classes, enc, ctx.tau_cls);
                    r.acc_local = r.acc_base;
                } else {
                    const auto local_tests = filter_by_labels(task, task.test_indices, local_classes);
                    // Base means classes seen on other clients only: the
                    // client's own classes are excluded from the base row,
                    // samples and candidates alike.
                    std::vector<int> others;
                    set_difference_sorted(ctx.split.base_classes, local_classes, others);
                    const auto other_tests = filter_by_labels(task, task.test_indices, others);
                    // The local row classifies the client's own test samples
                    // against the full base universe, so personalization is
                    // visible rather than forced by a tiny candidate set.
                    r.acc_local = try_accuracy(task, local_tests, client.prompt,
                                               ctx.split.base_classes, enc, ctx.tau_cls);
                    r.acc_base = try_accuracy(task, other_tests, client.prompt, others, enc,
                                              ctx.tau_cls);
                }
                r.acc_novel = try_accuracy(task, novel_tests, client.prompt,
                                           ctx.split.novel_classes, enc, ctx.tau_cls);
                if (r.acc_local && r.acc_base && r.acc_novel) {
                    r.hm = harmonic_mean(*r.acc_local, *r.acc_base, *r.acc_novel);
                }
                records.push_back(std::move(r));
            }
            break;
        }
        case ProtocolKind::personalization: {
            if (ctx.personal_tests.size() != clients.size()) {
                throw InvalidParameter("evaluate_protocol: personalization test split missing");
            }
            std::vector<int> all_classes(task.num_classes);
            for (int k = 0; k < task.num_classes; ++k) all_classes[k] = k;
            for (std::size_t c = 0; c < clients.size(); ++c) {
                MetricsRecord r;
                r.round = round;
                r.client = clients[c].id;
                r.l_ce = clients[c].l_ce;
                r.l_con = clients[c].l_con;
                r.acc_local = try_accuracy(task, ctx.personal_tests[c], clients[c].prompt,
                                           all_classes, enc, ctx.tau_cls);
                records.push_back(std::move(r));
            }
            break;
        }
        case ProtocolKind::leave_one_domain_out: {
            if (ctx.target_test.empty()) {
                throw InvalidParameter("evaluate_protocol: target domain test set missing");
            }
            std::vector<int> all_classes(task.num_classes);
            for (int k = 0; k < task.num_classes; ++k) all_classes[k] = k;
            for (const auto& client : clients) {
                MetricsRecord r;
                r.round = round;
                r.client = client.id;
                r.l_ce = client.l_ce;
                r.l_con = client.l_con;
                r.acc_local = try_accuracy(task, ctx.target_test, client.prompt, all_classes, enc,
                                           ctx.tau_cls);
                records.push_back(std::move(r));
            }
            break;
        }
    }

    records.push_back(aggregate_records(records, round));
    return records;
}

}  // namespace fedpgp
