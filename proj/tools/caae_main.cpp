// caae: synthetic paired-domain datasets, three-stage adversarial training,
// cluster-to-class evaluation, and figure-style diagnostics from one binary.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "caae/analysis.hpp"
#include "caae/cluster_eval.hpp"
#include "caae/model.hpp"
#include "caae/synthdata.hpp"
#include "caae/trainer.hpp"
#include "json.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace caae;
using cli::RunConfig;
using cli::UsageError;

namespace {

fs::path resolve_out(const std::string& out_flag, const char* command) {
    if (!out_flag.empty()) return out_flag;
    if (const char* root = std::getenv("CAAE_RUN_ROOT")) return fs::path(root) / command;
    throw UsageError(std::string("--out is required (or set CAAE_RUN_ROOT) for '") + command + "'");
}

void require_file(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

struct EncodedDataset {
    std::vector<int> clusters;
    std::vector<TissueClass> labels;
    std::vector<std::string> ids;
    Tensor<float> y;  // N x K
    Tensor<float> z;  // N x d
};

EncodedDataset encode_dataset(const Dataset& ds, CAAEParams& params, const ModelConfig& cfg,
                              const std::vector<std::size_t>& subset = {}) {
    std::vector<std::size_t> indices = subset;
    if (indices.empty()) {
        indices.resize(ds.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    }
    EncodedDataset out;
    const int n = static_cast<int>(indices.size());
    if (!cfg.style_only) out.y = Tensor<float>({n, cfg.cluster_count});
    out.z = Tensor<float>({n, cfg.style_dim});
    out.clusters.reserve(n);
    constexpr std::size_t kChunk = 64;
    for (std::size_t from = 0; from < indices.size(); from += kChunk) {
        const std::size_t count = std::min(kChunk, indices.size() - from);
        auto batch = ds.make_batch({indices.data() + from, count}, false);
        auto lat = encode(params, batch.a, cfg);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t row = from + i;
            if (!cfg.style_only) {
                std::copy_n(lat.y.data.begin() + i * cfg.cluster_count, cfg.cluster_count,
                            out.y.data.begin() + row * cfg.cluster_count);
                out.clusters.push_back(assign_cluster(
                    std::span<const float>(lat.y.data.data() + i * cfg.cluster_count, cfg.cluster_count)));
            } else {
                out.clusters.push_back(-1);
            }
            std::copy_n(lat.z.data.begin() + i * cfg.style_dim, cfg.style_dim, out.z.data.begin() + row * cfg.style_dim);
        }
    }
    for (std::size_t i : indices) {
        out.labels.push_back(ds.record(i).class_label);
        out.ids.push_back(ds.record(i).id);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_mapping(const ClusterMapping& m, const fs::path& path) {
    nlohmann::ordered_json j;
    j["provenance"] = m.provenance == ClusterMapping::Provenance::subset       ? "subset"
                      : m.provenance == ClusterMapping::Provenance::all_labels ? "all_labels"
                                                                               : "f1_greedy";
    j["n_per_class"] = m.n_per_class;
    auto arr = nlohmann::ordered_json::array();
    for (auto c : m.classes) arr.push_back(to_string(c));
    j["classes"] = arr;
    write_text(path, j.dump(2) + "\n");
}

ClusterMapping read_mapping(const fs::path& path, int cluster_count) {
    require_file(path, "mapping file");
    std::ifstream in(path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/true);
    ClusterMapping m;
    for (const auto& name : j.at("classes")) {
        const std::string s = name.get<std::string>();
        if (s == "stroma") m.classes.push_back(MappedClass::stroma);
        else if (s == "benign") m.classes.push_back(MappedClass::benign);
        else if (s == "tumor") m.classes.push_back(MappedClass::tumor);
        else if (s == "unassigned") m.classes.push_back(MappedClass::unassigned);
        else throw UsageError("mapping file: unknown class '" + s + "'");
    }
    if (m.cluster_count() != cluster_count)
        throw UsageError("mapping file covers " + std::to_string(m.cluster_count()) + " clusters, model has " +
                         std::to_string(cluster_count));
    return m;
}

// balanced per-class pick for the subset protocol, deterministic per seed
std::vector<std::size_t> pick_subset(const EncodedDataset& enc, int n_per_class, std::uint64_t seed) {
    std::array<std::vector<std::size_t>, 3> pools;
    for (std::size_t i = 0; i < enc.labels.size(); ++i) pools[static_cast<int>(enc.labels[i])].push_back(i);
    Rng rng = derive_rng(seed, "eval_subset");
    std::vector<std::size_t> subset;
    for (int c = 0; c < 3; ++c) {
        auto& pool = pools[c];
        if (static_cast<int>(pool.size()) < n_per_class)
            throw UsageError("eval: class '" + std::string(to_string(static_cast<TissueClass>(c))) + "' has only " +
                             std::to_string(pool.size()) + " patches, need " + std::to_string(n_per_class));
        for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) std::swap(pool[i], pool[rng.uniform_int(i + 1)]);
        subset.insert(subset.end(), pool.begin(), pool.begin() + n_per_class);
    }
    return subset;
}

int run_app(int argc, char** argv) {
    CLI::App app{"clustering adversarial autoencoder on synthetic paired-domain patches"};
    app.require_subcommand(1);

    std::string config_file, out_flag, data_flag, ckpt_flag;
    std::optional<std::uint64_t> seed_flag;
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (only 1 is implemented; kept for config stability)");

    auto add_common = [&](CLI::App* cmd, bool needs_out = true) {
        cmd->add_option("--config", config_file, "JSON run configuration (sections: model/train/gen/eval, seed)");
        cmd->add_option("--seed", seed_flag, "master seed");
        if (needs_out) cmd->add_option("--out", out_flag, "output directory (default $CAAE_RUN_ROOT/<cmd>)");
    };

    auto effective_config = [&]() {
        RunConfig cfg;
        if (!config_file.empty()) {
            require_file(config_file, "config file");
            cfg = cli::load_run_config(config_file);
        }
        if (seed_flag) cfg.seed = *seed_flag;
        cfg.sync_seeds();
        if (threads != 1)
            std::cerr << "note: --threads " << threads << " requested; this build runs single-threaded\n";
        return cfg;
    };

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a paired-domain dataset with a JSON-lines manifest");
    add_common(synth);
    std::string counts_flag;
    std::optional<int> patch_flag, jitter_flag;
    std::optional<float> subtlety_flag, noise_flag, contamination_flag;
    synth->add_option("--counts", counts_flag, "patches per class: stroma,benign,tumor");
    synth->add_option("--patch", patch_flag, "patch size in pixels");
    synth->add_option("--subtlety", subtlety_flag, "benign/tumor similarity in domain A, 0..1");
    synth->add_option("--jitter", jitter_flag, "max domain-B registration offset, pixels");
    synth->add_option("--noise", noise_flag, "pixel noise sigma");
    synth->add_option("--contamination", contamination_flag, "tumor patches carrying a benign gland, 0..1");
    synth->callback([&] {
        RunConfig cfg = effective_config();
        if (!counts_flag.empty()) {
            auto counts = cli::parse_int_list(counts_flag, "--counts");
            if (counts.size() != 3) throw UsageError("--counts needs exactly three values");
            cfg.gen.counts = {counts[0], counts[1], counts[2]};
        }
        if (patch_flag) cfg.gen.patch_size = *patch_flag;
        if (subtlety_flag) cfg.gen.subtlety = *subtlety_flag;
        if (jitter_flag) cfg.gen.jitter = *jitter_flag;
        if (noise_flag) cfg.gen.noise = *noise_flag;
        if (contamination_flag) cfg.gen.tumor_benign_contamination = *contamination_flag;
        try {
            cfg.gen.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        const fs::path out = resolve_out(out_flag, "synth");
        fs::create_directories(out);
        cli::write_config_echo(cfg, out);
        const auto manifest = gen_dataset(cfg.gen, out);
        std::cout << manifest.string() << "\n";
    });

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "run the three-stage adversarial training loop");
    add_common(train_cmd);
    std::string mode_flag, widths_flag, weights_flag, resume_flag;
    std::optional<int> steps_flag, batch_flag, k_flag, d_flag, model_patch_flag, ckpt_every_flag;
    std::optional<float> lr_recon_flag, lr_disc_flag, lr_adv_flag, adv_weight_flag;
    bool style_only_flag = false;
    train_cmd->add_option("--data", data_flag, "dataset manifest (from `caae synth`)")->required();
    train_cmd->add_option("--mode", mode_flag, "reconstruction target: a2a or a2b");
    train_cmd->add_option("--steps", steps_flag, "training steps");
    train_cmd->add_option("--batch", batch_flag, "minibatch size");
    train_cmd->add_option("--k", k_flag, "cluster count K");
    train_cmd->add_option("--style-dim", d_flag, "style size d");
    train_cmd->add_option("--patch", model_patch_flag, "model patch size");
    train_cmd->add_option("--widths", widths_flag, "conv widths, e.g. 8,16,32");
    train_cmd->add_option("--lr-recon", lr_recon_flag, "stage-1 learning rate");
    train_cmd->add_option("--lr-disc", lr_disc_flag, "stage-2 learning rate");
    train_cmd->add_option("--lr-adv", lr_adv_flag, "stage-3 learning rate");
    train_cmd->add_option("--adv-weight", adv_weight_flag, "adversarial loss weight");
    train_cmd->add_option("--checkpoint-every", ckpt_every_flag, "steps between checkpoints");
    train_cmd->add_option("--class-weights", weights_flag, "sampling weights: stroma,benign,tumor");
    train_cmd->add_option("--resume", resume_flag, "checkpoint to continue from");
    train_cmd->add_flag("--style-only", style_only_flag, "plain adversarial autoencoder (no cluster head)");
    train_cmd->callback([&] {
        RunConfig cfg = effective_config();
        if (!mode_flag.empty()) cfg.train.mode = recon_mode_from_string(mode_flag);
        if (steps_flag) cfg.train.steps = *steps_flag;
        if (batch_flag) cfg.train.batch_size = *batch_flag;
        if (k_flag) cfg.model.cluster_count = *k_flag;
        if (d_flag) cfg.model.style_dim = *d_flag;
        if (model_patch_flag) cfg.model.patch_size = *model_patch_flag;
        if (!widths_flag.empty()) cfg.model.conv_widths = cli::parse_int_list(widths_flag, "--widths");
        if (lr_recon_flag) cfg.train.lr_recon = *lr_recon_flag;
        if (lr_disc_flag) cfg.train.lr_disc = *lr_disc_flag;
        if (lr_adv_flag) cfg.train.lr_adv = *lr_adv_flag;
        if (adv_weight_flag) cfg.train.adv_weight = *adv_weight_flag;
        if (ckpt_every_flag) cfg.train.checkpoint_every = *ckpt_every_flag;
        if (style_only_flag) cfg.model.style_only = true;
        if (!weights_flag.empty()) {
            auto w = cli::parse_double_list(weights_flag, "--class-weights");
            if (w.size() != 3) throw UsageError("--class-weights needs exactly three values");
            cfg.train.class_weights = {w[0], w[1], w[2]};
        }
        try {
            cfg.model.validate();
            cfg.train.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        require_file(data_flag, "dataset manifest");
        const fs::path out = resolve_out(out_flag, "train");
        fs::create_directories(out);
        cli::write_config_echo(cfg, out);

        auto dataset = Dataset::load(data_flag);
        std::optional<fs::path> resume;
        if (!resume_flag.empty()) {
            require_file(resume_flag, "resume checkpoint");
            resume = resume_flag;
        }
        auto result = train(cfg.model, cfg.train, dataset, out, resume, [](const StepReport& r) {
            if (r.step % 500 == 0)
                std::fprintf(stderr, "step %lld recon %.4f disc_y %.4f disc_z %.4f adv %.4f\n",
                             static_cast<long long>(r.step), r.recon, r.disc_y, r.disc_z, r.adv);
        });
        std::cout << result.final_checkpoint.string() << "\n";
    });

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "cluster-to-class mapping and Table-style metrics");
    add_common(eval_cmd);
    std::optional<int> npc_flag;
    bool all_labels_flag = false, f1_flag = false, unassigned_tumor_flag = false;
    eval_cmd->add_option("--checkpoint", ckpt_flag, "trained model checkpoint")->required();
    eval_cmd->add_option("--data", data_flag, "eval dataset manifest")->required();
    eval_cmd->add_option("--n-per-class", npc_flag, "labeled patches per class for the subset mapping");
    eval_cmd->add_flag("--all-labels", all_labels_flag, "also fit the mapping on every label");
    eval_cmd->add_flag("--f1-mapping", f1_flag, "also run the greedy binary-F1 mapping search");
    eval_cmd->add_flag("--unassigned-as-tumor", unassigned_tumor_flag,
                       "score unassigned clusters as tumor in binary metrics (default: non-tumor)");
    eval_cmd->callback([&] {
        RunConfig cfg = effective_config();
        if (npc_flag) cfg.eval.n_per_class = *npc_flag;
        if (all_labels_flag) cfg.eval.all_labels = true;
        if (f1_flag) cfg.eval.f1_mapping = true;
        if (cfg.eval.n_per_class < 1) throw UsageError("--n-per-class must be >= 1");
        require_file(ckpt_flag, "checkpoint");
        require_file(data_flag, "dataset manifest");
        const fs::path out = resolve_out(out_flag, "eval");
        fs::create_directories(out);

        Checkpoint ckpt = load_checkpoint(ckpt_flag);
        if (ckpt.model.style_only)
            throw UsageError("eval: checkpoint was trained style_only; it has no cluster head to evaluate");
        cli::write_config_echo(cfg, out);
        auto dataset = Dataset::load(data_flag);
        if (dataset.size() == 0) throw UsageError("eval: dataset is empty");
        auto enc = encode_dataset(dataset, ckpt.params, ckpt.model);

        const auto subset_rows = pick_subset(enc, cfg.eval.n_per_class, cfg.seed);
        std::vector<char> in_subset(enc.clusters.size(), 0);
        std::vector<int> sub_clusters;
        std::vector<TissueClass> sub_labels;
        for (auto row : subset_rows) {
            in_subset[row] = 1;
            sub_clusters.push_back(enc.clusters[row]);
            sub_labels.push_back(enc.labels[row]);
        }
        std::vector<int> held_clusters;
        std::vector<TissueClass> held_labels;
        for (std::size_t i = 0; i < enc.clusters.size(); ++i)
            if (!in_subset[i]) {
                held_clusters.push_back(enc.clusters[i]);
                held_labels.push_back(enc.labels[i]);
            }

        auto subset_mapping = fit_mapping_subset(sub_clusters, sub_labels, ckpt.model.cluster_count,
                                                 cfg.eval.n_per_class);
        auto heldout = compute_metrics(subset_mapping, held_clusters, held_labels, unassigned_tumor_flag);
        auto fullset = compute_metrics(subset_mapping, enc.clusters, enc.labels, unassigned_tumor_flag);
        write_mapping(subset_mapping, out / "mapping_subset.json");
        write_text(out / "metrics_subset.csv", metrics_to_csv(heldout));

        nlohmann::ordered_json j;
        j["subset"] = {{"n_per_class", cfg.eval.n_per_class},
                       {"heldout", nlohmann::ordered_json::parse(metrics_to_json(heldout))},
                       {"fullset", nlohmann::ordered_json::parse(metrics_to_json(fullset))}};
        if (cfg.eval.all_labels) {
            auto all_mapping = fit_mapping_all(enc.clusters, enc.labels, ckpt.model.cluster_count);
            auto all_metrics = compute_metrics(all_mapping, enc.clusters, enc.labels, unassigned_tumor_flag);
            write_mapping(all_mapping, out / "mapping_all_labels.json");
            write_text(out / "metrics_all_labels.csv", metrics_to_csv(all_metrics));
            j["all_labels"] = nlohmann::ordered_json::parse(metrics_to_json(all_metrics));
        }
        if (cfg.eval.f1_mapping) {
            auto f1_mapping = fit_mapping_f1_greedy(enc.clusters, enc.labels, ckpt.model.cluster_count);
            auto f1_metrics = compute_metrics(f1_mapping, enc.clusters, enc.labels);
            write_mapping(f1_mapping, out / "mapping_f1_greedy.json");
            j["f1_greedy"] = nlohmann::ordered_json::parse(metrics_to_json(f1_metrics));
        }
        write_text(out / "metrics.json", j.dump(2) + "\n");

        std::ofstream assignments(out / "assignments.csv", std::ios::trunc);
        assignments << "id,cluster,class\n";
        for (std::size_t i = 0; i < enc.ids.size(); ++i)
            assignments << enc.ids[i] << "," << enc.clusters[i] << "," << to_string(enc.labels[i]) << "\n";

        std::cout << (out / "metrics.json").string() << "\n";
    });

    // ---- overlay ----
    auto* overlay_cmd = app.add_subcommand("overlay", "sliding-window class-frequency overlay of a wide scene");
    add_common(overlay_cmd);
    std::string image_flag, mapping_flag;
    std::optional<int> composite_flag, window_flag, stride_flag;
    bool clusters_flag = false;
    overlay_cmd->add_option("--checkpoint", ckpt_flag, "trained model checkpoint")->required();
    overlay_cmd->add_option("--image", image_flag, "input PNG (domain A)");
    overlay_cmd->add_option("--composite", composite_flag, "generate a synthetic composite of this size instead");
    overlay_cmd->add_option("--mapping", mapping_flag, "cluster mapping JSON from `caae eval`");
    overlay_cmd->add_option("--window", window_flag, "window size (default: model patch size)");
    overlay_cmd->add_option("--stride", stride_flag, "window stride (default: window/4)");
    overlay_cmd->add_flag("--clusters", clusters_flag, "color raw clusters instead of mapped classes");
    overlay_cmd->callback([&] {
        RunConfig cfg = effective_config();
        require_file(ckpt_flag, "checkpoint");
        const bool has_image = !image_flag.empty();
        if (has_image == composite_flag.has_value())
            throw UsageError("overlay: pass exactly one of --image or --composite");
        if (!clusters_flag && mapping_flag.empty())
            throw UsageError("overlay: class mode needs --mapping (or use --clusters)");
        const fs::path out = resolve_out(out_flag, "overlay");
        fs::create_directories(out / "figs");
        Checkpoint ckpt = load_checkpoint(ckpt_flag);
        cli::write_config_echo(cfg, out);

        Tensor<float> image;
        if (!image_flag.empty()) {
            require_file(image_flag, "input image");
            image = to_float(read_png(image_flag));
        } else {
            GenConfig gen = cfg.gen;
            gen.patch_size = ckpt.model.patch_size;
            Rng rng = derive_rng(cfg.seed, "composite");
            auto scene = gen_composite(gen, *composite_flag, *composite_flag, rng);
            image = scene.image;
            write_png(out / "figs" / "composite.png", to_u8(scene.image));
            ImageU8 truth;
            truth.height = scene.height;
            truth.width = scene.width;
            truth.rgb.resize(scene.class_map.size() * 3);
            for (std::size_t i = 0; i < scene.class_map.size(); ++i) {
                const auto col = class_color(static_cast<MappedClass>(scene.class_map[i]));
                for (int c = 0; c < 3; ++c) truth.rgb[i * 3 + c] = col[c];
            }
            write_png(out / "figs" / "composite_truth.png", truth);
        }

        const int window = window_flag ? *window_flag : ckpt.model.patch_size;
        const int stride = stride_flag ? *stride_flag : std::max(1, window / 4);
        if (clusters_flag) {
            auto map = sliding_window_cluster_overlay(image, ckpt.params, ckpt.model, window, stride);
            render_cluster_overlay(image, map, out / "figs" / "overlay_clusters.png");
        } else {
            auto mapping = read_mapping(mapping_flag, ckpt.model.cluster_count);
            auto map = sliding_window_overlay(image, ckpt.params, ckpt.model, mapping, window, stride);
            render_overlay(image, map, out / "figs" / "overlay.png");
            write_overlay_csv(map, out / "overlay_coverage.csv");
        }
        std::cout << (out / "figs").string() << "\n";
    });

    // ---- exemplars ----
    auto* ex_cmd = app.add_subcommand("exemplars", "grid of patches that maximize chosen clusters");
    add_common(ex_cmd);
    std::string clusters_list_flag = "0..9";
    int top_flag = 12;
    ex_cmd->add_option("--checkpoint", ckpt_flag, "trained model checkpoint")->required();
    ex_cmd->add_option("--data", data_flag, "dataset manifest")->required();
    ex_cmd->add_option("--clusters", clusters_list_flag, "clusters to show, e.g. 0..9 or 1,4,7");
    ex_cmd->add_option("--top", top_flag, "patches per cluster");
    ex_cmd->callback([&] {
        RunConfig cfg = effective_config();
        require_file(ckpt_flag, "checkpoint");
        require_file(data_flag, "dataset manifest");
        if (top_flag < 1) throw UsageError("--top must be >= 1");
        const fs::path out = resolve_out(out_flag, "exemplars");
        fs::create_directories(out / "figs");
        Checkpoint ckpt = load_checkpoint(ckpt_flag);
        if (ckpt.model.style_only) throw UsageError("exemplars: style_only checkpoints have no clusters");
        cli::write_config_echo(cfg, out);
        auto dataset = Dataset::load(data_flag);
        const auto chosen = cli::parse_cluster_list(clusters_list_flag, ckpt.model.cluster_count);

        std::vector<Tensor<float>> tiles;
        std::ofstream csv(out / "exemplars.csv", std::ios::trunc);
        csv << "cluster,rank,id,score\n";
        for (int k : chosen) {
            auto hits = cluster_exemplars(dataset, ckpt.params, ckpt.model, k, top_flag);
            for (std::size_t r = 0; r < hits.size(); ++r) {
                tiles.push_back(dataset.load_pair(hits[r].index).image_a);
                char line[192];
                std::snprintf(line, sizeof line, "%d,%zu,%s,%.9g\n", k, r, hits[r].id.c_str(),
                              static_cast<double>(hits[r].score));
                csv << line;
            }
            // pad short rows so the grid stays rectangular
            while (tiles.size() % static_cast<std::size_t>(top_flag) != 0)
                tiles.push_back(Tensor<float>({dataset.patch_size(), dataset.patch_size(), 3}, 1.f));
        }
        render_exemplar_grid(tiles, static_cast<int>(chosen.size()), top_flag, out / "figs" / "exemplars.png");
        std::cout << (out / "figs" / "exemplars.png").string() << "\n";
    });

    // ---- embed ----
    auto* embed_cmd = app.add_subcommand("embed", "exact t-SNE of encoder latents");
    add_common(embed_cmd);
    std::string latent_flag = "z";
    int max_n_flag = 2000, iters_flag = 1000;
    double perplexity_flag = 30.0;
    embed_cmd->add_option("--checkpoint", ckpt_flag, "trained model checkpoint")->required();
    embed_cmd->add_option("--data", data_flag, "dataset manifest")->required();
    embed_cmd->add_option("--latent", latent_flag, "which latent to embed: y or z");
    embed_cmd->add_option("--max-n", max_n_flag, "cap on embedded patches");
    embed_cmd->add_option("--perplexity", perplexity_flag, "t-SNE perplexity");
    embed_cmd->add_option("--iters", iters_flag, "t-SNE iterations");
    embed_cmd->callback([&] {
        RunConfig cfg = effective_config();
        require_file(ckpt_flag, "checkpoint");
        require_file(data_flag, "dataset manifest");
        if (max_n_flag < 2) throw UsageError("--max-n must be >= 2");
        if (latent_flag != "y" && latent_flag != "z") throw UsageError("--latent must be y or z");
        const fs::path out = resolve_out(out_flag, "embed");
        fs::create_directories(out / "figs");
        Checkpoint ckpt = load_checkpoint(ckpt_flag);
        if (latent_flag == "y" && ckpt.model.style_only) throw UsageError("embed: no y latent in style_only mode");
        cli::write_config_echo(cfg, out);
        auto dataset = Dataset::load(data_flag);
        if (dataset.size() < 2) throw UsageError("embed: need at least two patches");

        std::vector<std::size_t> chosen(dataset.size());
        for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
        if (chosen.size() > static_cast<std::size_t>(max_n_flag)) {
            Rng rng = derive_rng(cfg.seed, "embed_sample");
            for (std::size_t i = chosen.size() - 1; i > 0; --i) std::swap(chosen[i], chosen[rng.uniform_int(static_cast<int>(i) + 1)]);
            chosen.resize(max_n_flag);
            std::sort(chosen.begin(), chosen.end());
        }
        auto enc = encode_dataset(dataset, ckpt.params, ckpt.model, chosen);

        const Tensor<float>& source = latent_flag == "y" ? enc.y : enc.z;
        const int dim = source.shape[1];
        std::vector<std::vector<double>> latents(enc.ids.size(), std::vector<double>(dim));
        for (std::size_t i = 0; i < latents.size(); ++i)
            for (int d = 0; d < dim; ++d) latents[i][d] = source.data[i * dim + d];

        auto emb = embed_tsne(latents, perplexity_flag, iters_flag, cfg.seed);
        std::vector<int> colors(enc.labels.size());
        for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = static_cast<int>(enc.labels[i]);
        render_embedding(emb, colors, 3, out / "figs" / "embedding.png");
        write_embedding_csv(emb, enc.ids, enc.clusters, enc.labels, out / "embedding.csv");
        std::cout << (out / "embedding.csv").string() << " kl=" << emb.kl << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message/help text
        return code == 0 ? 0 : 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_app(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
