#include "fedpgp/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedpgp {

namespace {

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error("short write to '" + path + "'");
}

template <typename T>
void append_pod(std::string& out, T value) {
    out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

void append_matrix(std::string& out, const Matrix& m) {
    append_pod<std::uint32_t>(out, std::uint32_t(m.rows()));
    append_pod<std::uint32_t>(out, std::uint32_t(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data().data()), m.data().size() * sizeof(double));
}

struct Cursor {
    const std::string& bytes;
    std::size_t at = 0;

    template <typename T>
    T read() {
        if (at + sizeof(T) > bytes.size()) throw Error("checkpoint: truncated");
        T v;
        std::memcpy(&v, bytes.data() + at, sizeof(T));
        at += sizeof(T);
        return v;
    }

    Matrix read_matrix() {
        const auto rows = read<std::uint32_t>();
        const auto cols = read<std::uint32_t>();
        const std::size_t n = std::size_t(rows) * cols;
        if (at + n * sizeof(double) > bytes.size()) throw Error("checkpoint: truncated");
        std::vector<double> data(n);
        std::memcpy(data.data(), bytes.data() + at, n * sizeof(double));
        at += n * sizeof(double);
        return Matrix(rows, cols, std::move(data));
    }
};

constexpr char kCheckpointMagic[8] = {'F', 'P', 'G', 'P', 'C', 'K', 'P', '1'};

json record_to_json(const MetricsRecord& r) {
    json j;
    j["round"] = r.round;
    if (r.client == kAggregateClient) {
        j["client"] = "aggregate";
    } else {
        j["client"] = r.client;
    }
    if (r.acc_local) j["acc_local"] = *r.acc_local;
    if (r.acc_base) j["acc_base"] = *r.acc_base;
    if (r.acc_novel) j["acc_novel"] = *r.acc_novel;
    if (r.hm) j["hm"] = *r.hm;
    j["l_ce"] = r.l_ce;
    j["l_con"] = r.l_con;
    return j;
}

std::string hash_string(const std::string& bytes) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(fnv1a(bytes)));
    return buf;
}

json config_echo(const ExperimentConfig& cfg) {
    json j;
    std::istringstream in(serialize_config(cfg));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

std::string csv_cell(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

std::string csv_cell(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

struct SummaryRow {
    std::string param;
    std::string value;
    std::string seed;
    std::optional<double> acc_local, acc_base, acc_novel, hm;
    double l_ce = 0.0, l_con = 0.0;
};

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "param,value,seed,acc_local,acc_base,acc_novel,hm,l_ce,l_con\n";
    for (const auto& r : rows) {
        out += r.param + "," + r.value + "," + r.seed + "," + csv_cell(r.acc_local) + "," +
               csv_cell(r.acc_base) + "," + csv_cell(r.acc_novel) + "," + csv_cell(r.hm) + "," +
               csv_cell(r.l_ce) + "," + csv_cell(r.l_con) + "\n";
    }
    return out;
}

SummaryRow outcome_row(const SeedRunOutcome& o, const std::string& param,
                       const std::string& value) {
    SummaryRow row;
    row.param = param;
    row.value = value;
    row.seed = std::to_string(o.seed);
    row.acc_local = o.final_aggregate.acc_local;
    row.acc_base = o.final_aggregate.acc_base;
    row.acc_novel = o.final_aggregate.acc_novel;
    row.hm = o.final_aggregate.hm;
    row.l_ce = o.final_aggregate.l_ce;
    row.l_con = o.final_aggregate.l_con;
    return row;
}

// mean and std rows over the per-seed rows of one (param, value) group.
void append_stat_rows(std::vector<SummaryRow>& rows, const std::vector<SummaryRow>& group) {
    if (group.empty()) return;
    const auto stat = [&](auto getter) -> std::pair<std::optional<double>, std::optional<double>> {
        std::vector<double> xs;
        for (const auto& r : group) {
            const std::optional<double> v = getter(r);
            if (!v) return {std::nullopt, std::nullopt};
            xs.push_back(*v);
        }
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= double(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= double(xs.size());
        return {mean, std::sqrt(var)};
    };
    SummaryRow mean_row, std_row;
    mean_row.param = std_row.param = group.front().param;
    mean_row.value = std_row.value = group.front().value;
    mean_row.seed = "mean";
    std_row.seed = "std";
    std::tie(mean_row.acc_local, std_row.acc_local) =
        stat([](const SummaryRow& r) { return r.acc_local; });
    std::tie(mean_row.acc_base, std_row.acc_base) =
        stat([](const SummaryRow& r) { return r.acc_base; });
    std::tie(mean_row.acc_novel, std_row.acc_novel) =
        stat([](const SummaryRow& r) { return r.acc_novel; });
    std::tie(mean_row.hm, std_row.hm) = stat([](const SummaryRow& r) { return r.hm; });
    const auto loss_stat = [&](auto getter) {
        double mean = 0.0;
        for (const auto& r : group) mean += getter(r);
        mean /= double(group.size());
        double var = 0.0;
        for (const auto& r : group) var += (getter(r) - mean) * (getter(r) - mean);
        return std::pair<double, double>(mean, std::sqrt(var / double(group.size())));
    };
    std::tie(mean_row.l_ce, std_row.l_ce) = loss_stat([](const SummaryRow& r) { return r.l_ce; });
    std::tie(mean_row.l_con, std_row.l_con) =
        loss_stat([](const SummaryRow& r) { return r.l_con; });
    rows.push_back(mean_row);
    rows.push_back(std_row);
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string metrics_to_jsonl(const std::vector<MetricsRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    append_pod<std::uint32_t>(out, 1u);  // version
    append_pod<std::uint64_t>(out, ckpt.seed);
    append_pod<std::uint32_t>(out, ckpt.round);
    append_matrix(out, ckpt.global);
    append_pod<std::uint32_t>(out, std::uint32_t(ckpt.clients.size()));
    for (const auto& c : ckpt.clients) {
        append_pod<std::int32_t>(out, std::int32_t(c.id));
        append_pod<std::uint8_t>(out, c.kind);
        if (c.kind == 1) {
            append_matrix(out, c.adapter.u);
            append_matrix(out, c.adapter.v);
        } else if (c.kind == 2) {
            append_matrix(out, c.full_delta);
        }
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Cursor cur{bytes};
    char magic[8];
    for (char& m : magic) m = cur.read<char>();
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw Error("checkpoint: bad magic");
    }
    const auto version = cur.read<std::uint32_t>();
    if (version != 1) throw Error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.seed = cur.read<std::uint64_t>();
    ckpt.round = cur.read<std::uint32_t>();
    ckpt.global = cur.read_matrix();
    const auto n = cur.read<std::uint32_t>();
    ckpt.clients.resize(n);
    for (auto& c : ckpt.clients) {
        c.id = cur.read<std::int32_t>();
        c.kind = cur.read<std::uint8_t>();
        if (c.kind == 1) {
            c.adapter.u = cur.read_matrix();
            c.adapter.v = cur.read_matrix();
            c.adapter.bottleneck = c.adapter.u.cols();
        } else if (c.kind == 2) {
            c.full_delta = cur.read_matrix();
        } else if (c.kind != 0) {
            throw Error("checkpoint: unknown personalization kind");
        }
    }
    return ckpt;
}

Checkpoint make_checkpoint(const ExperimentConfig& cfg, std::uint64_t seed,
                           const ExperimentResult& result) {
    Checkpoint ckpt;
    ckpt.seed = seed;
    ckpt.round = std::uint32_t(cfg.rounds);
    ckpt.global = result.final_global;
    for (const auto& client : result.clients) {
        CheckpointClient c;
        c.id = client.id;
        if (strategy_has_low_rank_adapter(cfg.strategy)) {
            c.kind = 1;
            c.adapter = client.adapter;
        } else if (cfg.strategy == StrategyKind::full_rank) {
            c.kind = 2;
            c.full_delta = client.full_delta;
        }
        ckpt.clients.push_back(std::move(c));
    }
    return ckpt;
}

void prepare_output_dir(const std::string& path, bool force) {
    if (path.empty()) throw ConfigError("out: no output directory given");
    const fs::path dir(path);
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw Error("output path '" + path + "' is not a directory");
        if (!fs::is_empty(dir) && !force) {
            throw Error("output directory '" + path + "' is not empty (use --force to overwrite)");
        }
    } else {
        fs::create_directories(dir);
    }
}

SeedRunOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
    SeedRunOutcome outcome;
    outcome.seed = seed;
    fs::create_directories(dir);

    json manifest;
    manifest["config"] = config_echo(cfg);
    manifest["seed"] = seed;

    const auto start = std::chrono::steady_clock::now();
    try {
        const ExperimentResult result = run_experiment(cfg, seed);

        const std::string jsonl = metrics_to_jsonl(result.metrics);
        const std::string ckpt = encode_checkpoint(make_checkpoint(cfg, seed, result));
        write_file(dir + "/metrics.jsonl", jsonl);
        write_file(dir + "/checkpoint.bin", ckpt);

        manifest["status"] = "ok";
        manifest["flagged_rounds"] = result.flagged_rounds;
        manifest["outputs"]["metrics.jsonl"] = hash_string(jsonl);
        manifest["outputs"]["checkpoint.bin"] = hash_string(ckpt);

        // Final-round aggregate record for the summary.
        for (auto it = result.metrics.rbegin(); it != result.metrics.rend(); ++it) {
            if (it->client == kAggregateClient) {
                outcome.final_aggregate = *it;
                break;
            }
        }
        outcome.ok = true;
    } catch (const std::exception& e) {
        manifest["status"] = "error";
        manifest["error"] = e.what();
        outcome.ok = false;
        outcome.error = e.what();
    }
    const auto end = std::chrono::steady_clock::now();
    manifest["wall_time_s"] = std::chrono::duration<double>(end - start).count();
    write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
    return outcome;
}

int run_command(const ExperimentConfig& cfg, const RunOptions& opt) {
    validate(cfg);
    prepare_output_dir(cfg.out, opt.force);

    std::vector<SummaryRow> rows;
    std::vector<SummaryRow> seed_rows;
    bool all_ok = true;
    for (std::uint64_t seed : cfg.seeds) {
        const std::string dir = cfg.out + "/seed_" + std::to_string(seed);
        const SeedRunOutcome outcome = run_seed(cfg, seed, dir);
        all_ok = all_ok && outcome.ok;
        if (outcome.ok) seed_rows.push_back(outcome_row(outcome, "-", "-"));
    }
    rows = seed_rows;
    append_stat_rows(rows, seed_rows);
    write_file(cfg.out + "/summary.csv", summary_csv(rows));
    return all_ok ? 0 : 1;
}

int sweep_command(const ExperimentConfig& cfg, const std::string& parameter,
                  const std::vector<std::string>& values, const RunOptions& opt) {
    if (values.empty()) throw InvalidParameter("sweep: empty value list");
    if (parameter != "mu" && parameter != "b" && parameter != "shots") {
        throw InvalidParameter("sweep: parameter must be one of mu, b, shots");
    }
    validate(cfg);
    prepare_output_dir(cfg.out, opt.force);

    const std::string key = parameter == "b" ? "bottleneck" : parameter;
    std::vector<SummaryRow> rows;
    bool all_ok = true;
    for (const std::string& value : values) {
        ExperimentConfig run_cfg = cfg;
        apply_override(run_cfg, key, value);
        validate(run_cfg);

        std::vector<SummaryRow> group;
        for (std::uint64_t seed : run_cfg.seeds) {
            const std::string dir =
                cfg.out + "/" + parameter + "_" + value + "/seed_" + std::to_string(seed);
            const SeedRunOutcome outcome = run_seed(run_cfg, seed, dir);
            all_ok = all_ok && outcome.ok;
            if (outcome.ok) group.push_back(outcome_row(outcome, parameter, value));
        }
        rows.insert(rows.end(), group.begin(), group.end());
        append_stat_rows(rows, group);
    }
    write_file(cfg.out + "/summary.csv", summary_csv(rows));
    return all_ok ? 0 : 1;
}

}  // namespace fedpgp
