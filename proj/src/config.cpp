#include "fedpgp/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedpgp {

const char* partition_name(PartitionKind kind) {
    switch (kind) {
        case PartitionKind::pathological: return "pathological";
        case PartitionKind::dirichlet: return "dirichlet";
        case PartitionKind::iid: return "iid";
        case PartitionKind::leave_one_domain_out: return "leave_one_domain_out";
    }
    return "unknown";
}

PartitionKind partition_from_name(const std::string& name) {
    for (PartitionKind k : {PartitionKind::pathological, PartitionKind::dirichlet,
                            PartitionKind::iid, PartitionKind::leave_one_domain_out}) {
        if (name == partition_name(k)) return k;
    }
    throw ConfigError("unknown partition '" + name + "'");
}

const char* protocol_name(ProtocolKind kind) {
    switch (kind) {
        case ProtocolKind::base_to_novel: return "base_to_novel";
        case ProtocolKind::personalization: return "personalization";
        case ProtocolKind::leave_one_domain_out: return "leave_one_domain_out";
    }
    return "unknown";
}

ProtocolKind protocol_from_name(const std::string& name) {
    for (ProtocolKind k : {ProtocolKind::base_to_novel, ProtocolKind::personalization,
                           ProtocolKind::leave_one_domain_out}) {
        if (name == protocol_name(k)) return k;
    }
    throw ConfigError("unknown protocol '" + name + "'");
}

TaskParams ExperimentConfig::task_params() const {
    TaskParams p;
    p.num_classes = task_classes;
    p.num_domains = task_domains;
    p.samples_per_class_per_domain = samples_per_class;
    p.d_img = static_cast<std::size_t>(d_img);
    p.sigma = sigma;
    p.separable = separable;
    return p;
}

EncoderDims ExperimentConfig::encoder_dims() const {
    EncoderDims d;
    d.d_token = static_cast<std::size_t>(d_token);
    d.d_feat = static_cast<std::size_t>(d_feat);
    d.d_img = static_cast<std::size_t>(d_img);
    d.hidden = static_cast<std::size_t>(hidden);
    d.context_len = static_cast<std::size_t>(context_len);
    return d;
}

LossConfig ExperimentConfig::loss_config() const {
    LossConfig l;
    l.mu = mu;
    l.tau_cls = tau_cls;
    l.tau_con = tau_con;
    l.zc_class_averaged = zc_class_averaged;
    l.negate_pos_ablation = negate_pos_ablation;
    return l;
}

void validate(const ExperimentConfig& cfg) {
    const auto fail = [](const std::string& key, const std::string& why) {
        throw ConfigError(key + ": " + why);
    };
    if (cfg.num_clients < 1) fail("clients", "must be >= 1");
    if (cfg.rounds < 1) fail("rounds", "must be >= 1");
    if (cfg.epochs < 1) fail("epochs", "must be >= 1");
    if (!(cfg.participation > 0.0) || cfg.participation > 1.0) {
        fail("participation", "must be in (0, 1]");
    }
    if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
    if (!(cfg.eta > 0.0)) fail("eta", "must be > 0");
    if (cfg.mu < 0.0) fail("mu", "must be >= 0");
    if (!(cfg.tau_cls > 0.0)) fail("tau_cls", "must be > 0");
    if (!(cfg.tau_con > 0.0)) fail("tau_con", "must be > 0");
    if (cfg.d_token < 1) fail("d_token", "must be >= 1");
    if (cfg.d_feat < 1) fail("d_feat", "must be >= 1");
    if (cfg.d_img < 1) fail("d_img", "must be >= 1");
    if (cfg.hidden < 1) fail("hidden", "must be >= 1");
    if (cfg.context_len < 1) fail("context_len", "must be >= 1");
    const int cap = std::min(cfg.d_token, cfg.context_len);
    if (cfg.bottleneck < 1 || cfg.bottleneck > cap) {
        fail("bottleneck", "must be in [1, min(d_token, context_len)] = [1, " +
                               std::to_string(cap) + "]");
    }
    if (!(cfg.prompt_scale > 0.0)) fail("prompt_scale", "must be > 0");
    if (cfg.task_classes < 2) fail("task_classes", "must be >= 2");
    if (cfg.task_domains < 1) fail("task_domains", "must be >= 1");
    if (cfg.samples_per_class < 1) fail("samples_per_class", "must be >= 1");
    if (cfg.sigma < 0.0) fail("sigma", "must be >= 0");
    if (!(cfg.alpha > 0.0)) fail("alpha", "must be > 0");
    if (cfg.shots < 0) fail("shots", "must be >= 0");
    if (cfg.eval_stride < 1) fail("eval_stride", "must be >= 1");
    if (cfg.workers < 1) fail("workers", "must be >= 1");
    if (cfg.seeds.empty()) fail("seeds", "must list at least one seed");

    switch (cfg.protocol) {
        case ProtocolKind::base_to_novel:
            if (cfg.partition != PartitionKind::pathological) {
                fail("protocol", "base_to_novel requires partition = pathological");
            }
            if (cfg.num_clients > (cfg.task_classes + 1) / 2) {
                fail("clients", "must not exceed the base class count " +
                                    std::to_string((cfg.task_classes + 1) / 2));
            }
            break;
        case ProtocolKind::personalization:
            if (cfg.partition == PartitionKind::leave_one_domain_out) {
                fail("protocol", "personalization cannot use the leave_one_domain_out partition");
            }
            if (cfg.partition == PartitionKind::pathological &&
                cfg.num_clients > (cfg.task_classes + 1) / 2) {
                fail("clients", "must not exceed the base class count for pathological shards");
            }
            break;
        case ProtocolKind::leave_one_domain_out:
            if (cfg.partition != PartitionKind::leave_one_domain_out) {
                fail("protocol", "leave_one_domain_out requires the matching partition");
            }
            if (cfg.task_domains < 2) fail("task_domains", "must be >= 2 for domain holdout");
            if (cfg.num_clients != cfg.task_domains - 1) {
                fail("clients", "must equal task_domains - 1 = " +
                                    std::to_string(cfg.task_domains - 1));
            }
            if (cfg.target_domain < 0 || cfg.target_domain >= cfg.task_domains) {
                fail("target_domain", "must be in [0, task_domains)");
            }
            break;
    }
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(seeds[i]);
    }
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw ConfigError("seeds: empty list");
    return seeds;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<std::pair<std::string, Field>>& field_table() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        const auto add_int = [&t](const std::string& key, int ExperimentConfig::*member) {
            t.push_back({key,
                         {[member](const ExperimentConfig& c) { return std::to_string(c.*member); },
                          [member, key](ExperimentConfig& c, const std::string& v) {
                              try {
                                  c.*member = std::stoi(v);
                              } catch (const std::exception&) {
                                  throw ConfigError(key + ": expected an integer, got '" + v + "'");
                              }
                          }}});
        };
        const auto add_double = [&t](const std::string& key, double ExperimentConfig::*member) {
            t.push_back({key,
                         {[member](const ExperimentConfig& c) { return fmt_double(c.*member); },
                          [member, key](ExperimentConfig& c, const std::string& v) {
                              try {
                                  c.*member = std::stod(v);
                              } catch (const std::exception&) {
                                  throw ConfigError(key + ": expected a number, got '" + v + "'");
                              }
                          }}});
        };
        const auto add_bool = [&t](const std::string& key, bool ExperimentConfig::*member) {
            t.push_back({key,
                         {[member](const ExperimentConfig& c) {
                              return std::string(c.*member ? "true" : "false");
                          },
                          [member, key](ExperimentConfig& c, const std::string& v) {
                              c.*member = parse_bool(key, v);
                          }}});
        };

        t.push_back({"strategy",
                     {[](const ExperimentConfig& c) { return std::string(strategy_name(c.strategy)); },
                      [](ExperimentConfig& c, const std::string& v) {
                          c.strategy = strategy_from_name(v);
                      }}});
        add_int("clients", &ExperimentConfig::num_clients);
        add_int("rounds", &ExperimentConfig::rounds);
        add_int("epochs", &ExperimentConfig::epochs);
        add_double("participation", &ExperimentConfig::participation);
        add_int("batch_size", &ExperimentConfig::batch_size);
        add_double("eta", &ExperimentConfig::eta);
        add_double("mu", &ExperimentConfig::mu);
        add_double("tau_cls", &ExperimentConfig::tau_cls);
        add_double("tau_con", &ExperimentConfig::tau_con);
        add_int("bottleneck", &ExperimentConfig::bottleneck);
        add_int("context_len", &ExperimentConfig::context_len);
        add_int("d_token", &ExperimentConfig::d_token);
        add_int("d_feat", &ExperimentConfig::d_feat);
        add_int("d_img", &ExperimentConfig::d_img);
        add_int("hidden", &ExperimentConfig::hidden);
        add_double("prompt_scale", &ExperimentConfig::prompt_scale);
        add_int("task_classes", &ExperimentConfig::task_classes);
        add_int("task_domains", &ExperimentConfig::task_domains);
        add_int("samples_per_class", &ExperimentConfig::samples_per_class);
        add_double("sigma", &ExperimentConfig::sigma);
        add_bool("separable", &ExperimentConfig::separable);
        t.push_back({"partition",
                     {[](const ExperimentConfig& c) {
                          return std::string(partition_name(c.partition));
                      },
                      [](ExperimentConfig& c, const std::string& v) {
                          c.partition = partition_from_name(v);
                      }}});
        add_double("alpha", &ExperimentConfig::alpha);
        add_int("target_domain", &ExperimentConfig::target_domain);
        t.push_back({"protocol",
                     {[](const ExperimentConfig& c) { return std::string(protocol_name(c.protocol)); },
                      [](ExperimentConfig& c, const std::string& v) {
                          c.protocol = protocol_from_name(v);
                      }}});
        add_int("shots", &ExperimentConfig::shots);
        t.push_back({"seeds",
                     {[](const ExperimentConfig& c) { return fmt_seeds(c.seeds); },
                      [](ExperimentConfig& c, const std::string& v) { c.seeds = parse_seeds(v); }}});
        t.push_back({"out",
                     {[](const ExperimentConfig& c) { return c.out; },
                      [](ExperimentConfig& c, const std::string& v) { c.out = v; }}});
        add_int("eval_stride", &ExperimentConfig::eval_stride);
        add_int("workers", &ExperimentConfig::workers);
        add_bool("negate_pos_ablation", &ExperimentConfig::negate_pos_ablation);
        add_bool("zc_class_averaged", &ExperimentConfig::zc_class_averaged);
        add_bool("freeze_adapter", &ExperimentConfig::freeze_adapter);
        return t;
    }();
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& [name, field] : field_table()) {
        if (name == key) return &field;
    }
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : field_table()) {
        out += name;
        out += " = ";
        out += field.get(cfg);
        out += '\n';
    }
    return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* field = find_field(key);
        if (field == nullptr) throw ConfigError("unknown key '" + key + "'");
        field->set(cfg, value);
    }
    validate(cfg);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const Field* field = find_field(key);
    if (field == nullptr) throw ConfigError("unknown key '" + key + "'");
    field->set(cfg, value);
}

std::vector<std::string> preset_names() { return {"pathological-10", "dirichlet-100"}; }

ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig cfg;
    if (name == "pathological-10") {
        // Ten clients, full participation, base-to-novel over disjoint shards.
        cfg.strategy = StrategyKind::fedpgp;
        cfg.num_clients = 10;
        cfg.rounds = 25;
        cfg.epochs = 2;
        cfg.participation = 1.0;
        cfg.task_classes = 40;
        cfg.samples_per_class = 16;
        cfg.partition = PartitionKind::pathological;
        cfg.protocol = ProtocolKind::base_to_novel;
        cfg.eta = 0.02;
    } else if (name == "dirichlet-100") {
        // Hundred clients at 10% participation, Dirichlet(0.3) label skew.
        cfg.strategy = StrategyKind::fedpgp;
        cfg.num_clients = 100;
        cfg.rounds = 150;
        cfg.epochs = 1;
        cfg.participation = 0.1;
        cfg.task_classes = 10;
        cfg.samples_per_class = 120;
        cfg.partition = PartitionKind::dirichlet;
        cfg.alpha = 0.3;
        cfg.protocol = ProtocolKind::personalization;
        cfg.eta = 0.02;
        cfg.eval_stride = 5;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    validate(cfg);
    return cfg;
}

}  // namespace fedpgp
