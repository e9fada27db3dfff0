#include "fedpgp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fedpgp/errors.hpp"
#include "fedpgp/numkit.hpp"

namespace fedpgp {

namespace {

double distance(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double min_pairwise_distance(const std::vector<Vector>& points) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            best = std::min(best, distance(points[i], points[j]));
    return best;
}

std::vector<int> sorted_unique_labels(const SyntheticTask& task,
                                      const std::vector<std::size_t>& indices) {
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t idx : indices) labels.push_back(task.samples[idx].label);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

}  // namespace

// Marsaglia-Tsang; alpha < 1 handled through the boost
// gamma(alpha) = gamma(alpha + 1) * U^(1/alpha).
double gamma_draw(Rng& rng, double alpha) {
    if (!(alpha > 0.0)) throw InvalidParameter("gamma_draw: alpha must be positive");
    if (alpha < 1.0) {
        const double u = rng.uniform_open();
        return gamma_draw(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = rng.gaussian();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

SyntheticTask generate_task(const TaskParams& params, std::uint64_t seed) {
    if (params.num_classes < 2) throw InvalidParameter("generate_task: num_classes must be >= 2");
    if (params.num_domains < 1) throw InvalidParameter("generate_task: num_domains must be >= 1");
    if (params.samples_per_class_per_domain < 1) {
        throw InvalidParameter("generate_task: samples_per_class_per_domain must be >= 1");
    }
    if (params.sigma < 0.0) throw InvalidParameter("generate_task: sigma must be >= 0");
    if (params.d_img == 0) throw InvalidParameter("generate_task: d_img must be positive");

    Rng rng(seed);
    SyntheticTask task;
    task.num_classes = params.num_classes;
    task.num_domains = params.num_domains;
    task.sigma = params.sigma;

    task.prototypes.reserve(params.num_classes);
    for (int k = 0; k < params.num_classes; ++k) {
        Vector p(params.d_img);
        for (double& v : p) v = rng.gaussian();
        task.prototypes.push_back(std::move(p));
    }
    if (params.separable && params.sigma > 0.0) {
        const double min_dist = min_pairwise_distance(task.prototypes);
        const double needed = 4.0 * params.sigma;
        if (min_dist <= needed) {
            // Uniform rescaling keeps the draw sequence independent of the
            // repair, unlike rejection resampling.
            const double s = (needed * 1.25) / min_dist;
            for (Vector& p : task.prototypes)
                for (double& v : p) v *= s;
        }
    }

    // Domain 0 is the canonical domain; additional domains are shifted by
    // offsets whose norm is comparable to the mean inter-prototype distance.
    task.domain_offsets.assign(params.num_domains, Vector(params.d_img, 0.0));
    if (params.num_domains > 1) {
        double mean_dist = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < task.prototypes.size(); ++i)
            for (std::size_t j = i + 1; j < task.prototypes.size(); ++j) {
                mean_dist += distance(task.prototypes[i], task.prototypes[j]);
                ++pairs;
            }
        mean_dist /= static_cast<double>(pairs);
        for (int m = 1; m < params.num_domains; ++m) {
            Vector dir(params.d_img);
            for (double& v : dir) v = rng.gaussian();
            const double n = norm(dir);
            for (double& v : dir) v *= mean_dist / n;
            task.domain_offsets[m] = std::move(dir);
        }
    }

    const int n = params.samples_per_class_per_domain;
    const int n_test = n >= 2 ? std::max(1, n / 5) : 0;
    const int n_train = n - n_test;
    for (int m = 0; m < params.num_domains; ++m) {
        for (int k = 0; k < params.num_classes; ++k) {
            for (int j = 0; j < n; ++j) {
                Sample s;
                s.label = k;
                s.domain = m;
                s.x.resize(params.d_img);
                for (std::size_t i = 0; i < params.d_img; ++i) {
                    s.x[i] = task.prototypes[k][i] + task.domain_offsets[m][i] +
                             rng.gaussian(0.0, params.sigma);
                }
                const std::size_t idx = task.samples.size();
                task.samples.push_back(std::move(s));
                if (j < n_train) {
                    task.train_indices.push_back(idx);
                } else {
                    task.test_indices.push_back(idx);
                }
            }
        }
    }
    return task;
}

BaseNovelSplit base_novel_split(const SyntheticTask& task) {
    if (task.num_classes < 2) throw InvalidParameter("base_novel_split: need at least 2 classes");
    BaseNovelSplit split;
    const int base_count = (task.num_classes + 1) / 2;
    for (int k = 0; k < task.num_classes; ++k) {
        if (k < base_count) {
            split.base_classes.push_back(k);
        } else {
            split.novel_classes.push_back(k);
        }
    }
    return split;
}

std::vector<DatasetShard> pathological_partition(const SyntheticTask& task, int num_clients) {
    const BaseNovelSplit split = base_novel_split(task);
    if (num_clients < 1 || num_clients > static_cast<int>(split.base_classes.size())) {
        throw InvalidParameter("pathological_partition: num_clients " +
                               std::to_string(num_clients) + " exceeds base class count " +
                               std::to_string(split.base_classes.size()));
    }
    std::vector<DatasetShard> shards(num_clients);
    std::vector<int> owner_of_class(task.num_classes, -1);
    for (std::size_t i = 0; i < split.base_classes.size(); ++i) {
        const int client = static_cast<int>(i) % num_clients;
        const int cls = split.base_classes[i];
        owner_of_class[cls] = client;
        shards[client].class_set.push_back(cls);
    }
    for (int c = 0; c < num_clients; ++c) shards[c].owner = c;
    for (std::size_t idx : task.train_indices) {
        const int owner = owner_of_class[task.samples[idx].label];
        if (owner >= 0) shards[owner].indices.push_back(idx);
    }
    return shards;
}

std::vector<DatasetShard> dirichlet_partition(const SyntheticTask& task, int num_clients,
                                              double alpha, Rng& rng) {
    if (num_clients < 1) throw InvalidParameter("dirichlet_partition: num_clients must be >= 1");
    if (!(alpha > 0.0)) throw InvalidParameter("dirichlet_partition: alpha must be positive");

    std::vector<DatasetShard> shards(num_clients);
    for (int c = 0; c < num_clients; ++c) shards[c].owner = c;

    for (int k = 0; k < task.num_classes; ++k) {
        Vector props(num_clients);
        double sum = 0.0;
        for (int c = 0; c < num_clients; ++c) {
            props[c] = gamma_draw(rng, alpha);
            sum += props[c];
        }
        Vector cumulative(num_clients);
        double acc = 0.0;
        for (int c = 0; c < num_clients; ++c) {
            acc += props[c] / sum;
            cumulative[c] = acc;
        }
        cumulative.back() = 1.0;

        for (std::size_t idx : task.train_indices) {
            if (task.samples[idx].label != k) continue;
            const double u = rng.uniform();
            int client = 0;
            while (client + 1 < num_clients && u >= cumulative[client]) ++client;
            shards[client].indices.push_back(idx);
        }
    }

    // Empty-shard repair: move one sample out of the currently largest shard.
    for (int c = 0; c < num_clients; ++c) {
        if (!shards[c].indices.empty()) continue;
        int largest = 0;
        for (int o = 1; o < num_clients; ++o) {
            if (shards[o].indices.size() > shards[largest].indices.size()) largest = o;
        }
        if (shards[largest].indices.size() <= 1) {
            throw InvalidParameter("dirichlet_partition: not enough samples to repair empty shards");
        }
        shards[c].indices.push_back(shards[largest].indices.back());
        shards[largest].indices.pop_back();
    }

    for (auto& shard : shards) {
        std::sort(shard.indices.begin(), shard.indices.end());
        shard.class_set = sorted_unique_labels(task, shard.indices);
    }
    return shards;
}

std::vector<DatasetShard> iid_partition(const SyntheticTask& task, int num_clients) {
    if (num_clients < 1) throw InvalidParameter("iid_partition: num_clients must be >= 1");
    std::vector<DatasetShard> shards(num_clients);
    for (int c = 0; c < num_clients; ++c) shards[c].owner = c;
    // Round-robin within each class keeps every client's label mix balanced.
    for (int k = 0; k < task.num_classes; ++k) {
        std::size_t position = 0;
        for (std::size_t idx : task.train_indices) {
            if (task.samples[idx].label != k) continue;
            shards[position % num_clients].indices.push_back(idx);
            ++position;
        }
    }
    for (auto& shard : shards) {
        std::sort(shard.indices.begin(), shard.indices.end());
        shard.class_set = sorted_unique_labels(task, shard.indices);
    }
    return shards;
}

DomainHoldout leave_one_domain_out(const SyntheticTask& task, int target_domain, int num_clients) {
    if (task.num_domains < 2) throw InvalidParameter("leave_one_domain_out: need >= 2 domains");
    if (target_domain < 0 || target_domain >= task.num_domains) {
        throw InvalidParameter("leave_one_domain_out: target domain out of range");
    }
    if (num_clients != task.num_domains - 1) {
        throw InvalidParameter("leave_one_domain_out: num_clients must equal domains - 1 (" +
                               std::to_string(task.num_domains - 1) + ")");
    }

    DomainHoldout holdout;
    holdout.target_domain = target_domain;
    holdout.shards.resize(num_clients);
    std::vector<int> source_of_client;
    for (int m = 0; m < task.num_domains; ++m)
        if (m != target_domain) source_of_client.push_back(m);
    for (int c = 0; c < num_clients; ++c) holdout.shards[c].owner = c;

    for (std::size_t idx : task.train_indices) {
        const int m = task.samples[idx].domain;
        if (m == target_domain) continue;
        for (int c = 0; c < num_clients; ++c) {
            if (source_of_client[c] == m) {
                holdout.shards[c].indices.push_back(idx);
                break;
            }
        }
    }
    for (auto& shard : holdout.shards) {
        shard.class_set = sorted_unique_labels(task, shard.indices);
    }
    // The full target domain, train and test rows alike, is the shared test set.
    for (std::size_t idx = 0; idx < task.samples.size(); ++idx) {
        if (task.samples[idx].domain == target_domain) holdout.target_indices.push_back(idx);
    }
    return holdout;
}

void apply_shot_cap(std::vector<DatasetShard>& shards, const SyntheticTask& task, int shots) {
    if (shots < 0) throw InvalidParameter("apply_shot_cap: shots must be >= 0");
    if (shots == 0) return;
    for (auto& shard : shards) {
        std::vector<std::size_t> kept;
        std::vector<int> counts(task.num_classes, 0);
        for (std::size_t idx : shard.indices) {
            const int label = task.samples[idx].label;
            if (counts[label] < shots) {
                kept.push_back(idx);
                ++counts[label];
            }
        }
        shard.indices = std::move(kept);
        shard.class_set = sorted_unique_labels(task, shard.indices);
    }
}

std::string export_task(const SyntheticTask& task) {
    std::string out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "task %d %d %.17g\n", task.num_classes, task.num_domains,
                  task.sigma);
    out += buf;
    for (const Sample& s : task.samples) {
        std::snprintf(buf, sizeof(buf), "%d\t%d", s.domain, s.label);
        out += buf;
        for (double v : s.x) {
            std::snprintf(buf, sizeof(buf), "\t%.17g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

SyntheticTask import_task(const std::string& text) {
    std::istringstream in(text);
    std::string tag;
    SyntheticTask task;
    in >> tag >> task.num_classes >> task.num_domains >> task.sigma;
    if (tag != "task" || task.num_classes < 2 || task.num_domains < 1) {
        throw InvalidParameter("import_task: malformed header");
    }
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        Sample s;
        if (!(row >> s.domain >> s.label)) throw InvalidParameter("import_task: malformed row");
        double v = 0.0;
        while (row >> v) s.x.push_back(v);
        if (s.x.empty()) throw InvalidParameter("import_task: row without features");
        task.samples.push_back(std::move(s));
    }
    // Imported tasks carry samples only; splits and prototypes belong to the
    // generating implementation.
    for (std::size_t i = 0; i < task.samples.size(); ++i) task.train_indices.push_back(i);
    return task;
}

}  // namespace fedpgp
