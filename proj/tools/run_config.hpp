#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "caae/model.hpp"
#include "caae/synthdata.hpp"
#include "caae/trainer.hpp"

namespace caae::cli {

// command-line / config mistakes; mapped to exit code 2
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalOptions {
    int n_per_class = 200;
    bool all_labels = true;   // also fit the all-labels mapping
    bool f1_mapping = false;  // additionally run the greedy F1 mapping search
};

// One structured configuration for every subcommand: a JSON file with
// sections {model, train, gen, eval} and a master seed, each field
// overridable by a flag. Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 1;
    ModelConfig model;
    TrainConfig train;
    GenConfig gen;
    EvalOptions eval;

    // applies the master seed to the per-module seeds
    void sync_seeds();

    std::string echo_json() const;
};

RunConfig load_run_config(const std::filesystem::path& file);

// writes the effective config next to the run's outputs
void write_config_echo(const RunConfig& cfg, const std::filesystem::path& out_dir);

// "a,b,c" -> integers; used by --counts / --widths style flags
std::vector<int> parse_int_list(const std::string& text, const char* what);
std::vector<double> parse_double_list(const std::string& text, const char* what);
// "0..9" or "0,3,7"
std::vector<int> parse_cluster_list(const std::string& text, int cluster_count);

}  // namespace caae::cli
