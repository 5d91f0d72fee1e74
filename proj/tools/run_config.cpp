#include "run_config.hpp"

#include <fstream>

#include "json.hpp"

namespace caae::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
    throw UsageError("config: unknown key '" + key + "' in section '" + section + "'");
}

void apply_model(const json& j, ModelConfig& m) {
    for (const auto& [key, value] : j.items()) {
        if (key == "cluster_count") m.cluster_count = value.get<int>();
        else if (key == "style_dim") m.style_dim = value.get<int>();
        else if (key == "patch_size") m.patch_size = value.get<int>();
        else if (key == "channels") m.channels = value.get<int>();
        else if (key == "conv_widths") m.conv_widths = value.get<std::vector<int>>();
        else if (key == "disc_hidden") m.disc_hidden = value.get<int>();
        else if (key == "style_only") m.style_only = value.get<bool>();
        else if (key == "leaky_slope") m.leaky_slope = value.get<float>();
        else unknown_key("model", key);
    }
}

void apply_train(const json& j, TrainConfig& t) {
    for (const auto& [key, value] : j.items()) {
        if (key == "mode") t.mode = recon_mode_from_string(value.get<std::string>());
        else if (key == "batch_size") t.batch_size = value.get<int>();
        else if (key == "steps") t.steps = value.get<int>();
        else if (key == "lr_recon") t.lr_recon = value.get<float>();
        else if (key == "lr_disc") t.lr_disc = value.get<float>();
        else if (key == "lr_adv") t.lr_adv = value.get<float>();
        else if (key == "adv_weight") t.adv_weight = value.get<float>();
        else if (key == "checkpoint_every") t.checkpoint_every = value.get<int>();
        else if (key == "class_weights") t.class_weights = value.get<std::array<double, 3>>();
        else unknown_key("train", key);
    }
}

void apply_gen(const json& j, GenConfig& g) {
    for (const auto& [key, value] : j.items()) {
        if (key == "patch_size") g.patch_size = value.get<int>();
        else if (key == "counts") g.counts = value.get<std::array<int, 3>>();
        else if (key == "subtlety") g.subtlety = value.get<float>();
        else if (key == "jitter") g.jitter = value.get<int>();
        else if (key == "noise") g.noise = value.get<float>();
        else if (key == "tumor_benign_contamination") g.tumor_benign_contamination = value.get<float>();
        else unknown_key("gen", key);
    }
}

void apply_eval(const json& j, EvalOptions& e) {
    for (const auto& [key, value] : j.items()) {
        if (key == "n_per_class") e.n_per_class = value.get<int>();
        else if (key == "all_labels") e.all_labels = value.get<bool>();
        else if (key == "f1_mapping") e.f1_mapping = value.get<bool>();
        else unknown_key("eval", key);
    }
}

}  // namespace

void RunConfig::sync_seeds() {
    gen.seed = seed;
    train.seed = seed;
}

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw UsageError("config: cannot open " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config: " + file.string() + " is not valid JSON: " + e.what());
    }
    RunConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "model") apply_model(value, cfg.model);
            else if (key == "train") apply_train(value, cfg.train);
            else if (key == "gen") apply_gen(value, cfg.gen);
            else if (key == "eval") apply_eval(value, cfg.eval);
            else unknown_key("<root>", key);
        }
    } catch (const json::exception& e) {
        throw UsageError("config: bad value in " + file.string() + ": " + e.what());
    }
    cfg.sync_seeds();
    return cfg;
}

std::string RunConfig::echo_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["model"] = ordered_json::parse(model_config_to_json(model));
    j["train"] = ordered_json::parse(train_config_to_json(train));
    j["gen"] = ordered_json::parse(gen_config_to_json(gen));
    j["eval"] = {{"n_per_class", eval.n_per_class}, {"all_labels", eval.all_labels}, {"f1_mapping", eval.f1_mapping}};
    return j.dump(2);
}

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "config.echo", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write config echo in " + out_dir.string());
    out << cfg.echo_json() << "\n";
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": '" + tok + "' is not an integer");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw UsageError(std::string(what) + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": '" + tok + "' is not a number");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw UsageError(std::string(what) + ": empty list");
    return out;
}

std::vector<int> parse_cluster_list(const std::string& text, int cluster_count) {
    std::vector<int> out;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const auto lo_list = parse_int_list(text.substr(0, dots), "--clusters");
        const auto hi_list = parse_int_list(text.substr(dots + 2), "--clusters");
        if (lo_list.size() != 1 || hi_list.size() != 1) throw UsageError("--clusters: malformed range");
        for (int k = lo_list[0]; k <= hi_list[0]; ++k) out.push_back(k);
    } else {
        out = parse_int_list(text, "--clusters");
    }
    if (out.empty()) throw UsageError("--clusters: empty selection");
    for (int k : out)
        if (k < 0 || k >= cluster_count)
            throw UsageError("--clusters: index " + std::to_string(k) + " outside [0," +
                             std::to_string(cluster_count) + ")");
    return out;
}

}  // namespace caae::cli
