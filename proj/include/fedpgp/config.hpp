#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedpgp/data.hpp"
#include "fedpgp/encoders.hpp"
#include "fedpgp/eval.hpp"
#include "fedpgp/losses.hpp"
#include "fedpgp/strategy.hpp"

namespace fedpgp {

enum class PartitionKind { pathological, dirichlet, iid, leave_one_domain_out };

const char* partition_name(PartitionKind kind);
PartitionKind partition_from_name(const std::string& name);

const char* protocol_name(ProtocolKind kind);
ProtocolKind protocol_from_name(const std::string& name);

// Every experiment knob, file- and flag-settable through a flat key=value
// namespace. validate() checks all ranges before any work starts.
struct ExperimentConfig {
    StrategyKind strategy = StrategyKind::fedpgp;

    int num_clients = 10;       // N
    int rounds = 25;            // T
    int epochs = 2;             // E
    double participation = 1.0; // fraction of clients sampled per round
    int batch_size = 32;

    double eta = 0.001;
    double mu = 1.0;
    double tau_cls = 0.05;
    double tau_con = 1.0;
    int bottleneck = 8;         // b
    int context_len = 16;       // M
    int d_token = 32;
    int d_feat = 32;
    int d_img = 16;
    int hidden = 48;
    double prompt_scale = 0.02;

    int task_classes = 40;      // K; 20 base classes under a base/novel split
    int task_domains = 1;       // D
    int samples_per_class = 16; // per (class, domain)
    double sigma = 0.25;
    bool separable = true;

    PartitionKind partition = PartitionKind::pathological;
    double alpha = 0.3;
    int target_domain = 0;

    ProtocolKind protocol = ProtocolKind::base_to_novel;
    int shots = 0;              // per-(client, class) training cap; 0 = no cap

    std::vector<std::uint64_t> seeds = {1};
    std::string out;
    int eval_stride = 1;
    int workers = 1;

    bool negate_pos_ablation = false;
    bool zc_class_averaged = false;
    bool freeze_adapter = false;

    TaskParams task_params() const;
    EncoderDims encoder_dims() const;
    LossConfig loss_config() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Throws ConfigError naming the offending key on the first violated range.
void validate(const ExperimentConfig& cfg);

// Canonical flat serialization; parse(serialize(cfg)) == cfg.
std::string serialize_config(const ExperimentConfig& cfg);

// Parse `key = value` text (# comments, blank lines allowed). Unknown keys
// are rejected with a per-key diagnostic.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Apply `key=value` overrides on top of a parsed config, then re-validate.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Named presets mirroring the two reference federated settings.
std::vector<std::string> preset_names();
ExperimentConfig preset_config(const std::string& name);

}  // namespace fedpgp
