#include "caae/trainer.hpp"

#include <zlib.h>

#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace caae {

std::string_view to_string(ReconMode m) { return m == ReconMode::A2A ? "a2a" : "a2b"; }

ReconMode recon_mode_from_string(std::string_view s) {
    if (s == "a2a" || s == "A2A") return ReconMode::A2A;
    if (s == "a2b" || s == "A2B") return ReconMode::A2B;
    throw std::invalid_argument("unknown reconstruction mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
    if (adv_weight <= 0.f) throw std::invalid_argument("TrainConfig: adv_weight must be > 0");
    if (lr_recon <= 0.f || lr_disc <= 0.f || lr_adv <= 0.f)
        throw std::invalid_argument("TrainConfig: learning rates must be positive");
    if (checkpoint_every < 1) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
    double total = 0;
    for (double w : class_weights) {
        if (w < 0) throw std::invalid_argument("TrainConfig: class weights must be >= 0");
        total += w;
    }
    if (total <= 0) throw std::invalid_argument("TrainConfig: class weights must not all be zero");
}

std::string train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["mode"] = to_string(cfg.mode);
    j["batch_size"] = cfg.batch_size;
    j["steps"] = cfg.steps;
    j["lr_recon"] = cfg.lr_recon;
    j["lr_disc"] = cfg.lr_disc;
    j["lr_adv"] = cfg.lr_adv;
    j["adv_weight"] = cfg.adv_weight;
    j["seed"] = cfg.seed;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["class_weights"] = cfg.class_weights;
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TrainConfig cfg;
    cfg.mode = recon_mode_from_string(j.at("mode").get<std::string>());
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.steps = j.at("steps").get<int>();
    cfg.lr_recon = j.at("lr_recon").get<float>();
    cfg.lr_disc = j.at("lr_disc").get<float>();
    cfg.lr_adv = j.at("lr_adv").get<float>();
    cfg.adv_weight = j.at("adv_weight").get<float>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<int>();
    cfg.class_weights = j.at("class_weights").get<std::array<double, 3>>();
    cfg.validate();
    return cfg;
}

bool StepReport::all_finite() const {
    return std::isfinite(recon) && std::isfinite(disc_y) && std::isfinite(disc_z) && std::isfinite(adv);
}

const Tensor<float>& reconstruction_target(const TrainBatch& batch, ReconMode mode) {
    if (mode == ReconMode::A2A) return batch.a;
    if (batch.b.data.empty())
        throw std::invalid_argument("reconstruction_target: A2B run but the batch has no domain-B images");
    if (!same_shape(batch.a.shape, batch.b.shape))
        throw std::invalid_argument("reconstruction_target: domain shapes differ");
    return batch.b;
}

namespace {

struct ParamSnapshot {
    std::array<std::vector<std::vector<float>>, 4> data;

    static ParamSnapshot take(CAAEParams& p) {
        ParamSnapshot s;
        auto groups = p.groups();
        for (int g = 0; g < 4; ++g)
            for (auto& item : groups[g]->items) s.data[g].push_back(item.value.data);
        return s;
    }

    void restore(CAAEParams& p) const {
        auto groups = p.groups();
        for (int g = 0; g < 4; ++g)
            for (std::size_t i = 0; i < groups[g]->items.size(); ++i) groups[g]->items[i].value.data = data[g][i];
    }
};

float scalar_loss(const Graph<float>& g, Graph<float>::Id id, const char* stage) {
    const float v = g.value(id).data[0];
    if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite loss in ") + stage);
    return v;
}

void require_grads(CAAEParams& p, bool enc, bool dec, bool dy, bool dz) {
    p.encoder.set_requires_grad(enc);
    p.decoder.set_requires_grad(dec);
    p.disc_y.set_requires_grad(dy);
    p.disc_z.set_requires_grad(dz);
}

StageTrace::Snapshot hash_all(const CAAEParams& p) {
    return {p.encoder.content_hash(), p.decoder.content_hash(), p.disc_y.content_hash(), p.disc_z.content_hash()};
}

}  // namespace

StepReport train_step(CAAEParams& params, OptStates& opts, const TrainBatch& batch, const ModelConfig& model_cfg,
                      const TrainConfig& train_cfg, std::int64_t step, StageTrace* trace) {
    if (batch.a.rank() != 4 || batch.a.shape[0] < 2)
        throw std::invalid_argument("train_step: batch must hold at least 2 patches");
    const int n = batch.a.shape[0];
    const Tensor<float>& target = reconstruction_target(batch, train_cfg.mode);

    const ParamSnapshot snapshot = ParamSnapshot::take(params);
    StepReport report;
    report.step = step;

    try {
        // stage 1: autoencoder on the reconstruction loss
        require_grads(params, true, true, false, false);
        params.encoder.zero_grad();
        params.decoder.zero_grad();
        {
            Graph<float> g;
            auto lat = encode_graph(g, params, g.input(batch.a), model_cfg);
            auto recon = decode_graph(g, params, lat.y, lat.z, model_cfg);
            auto loss = g.mse_loss(recon, g.input(target));
            report.recon = scalar_loss(g, loss, "stage 1 (reconstruction)");
            g.backward(loss);
        }
        AdamConfig<float> opt_recon{train_cfg.lr_recon, 0.9f, 0.999f, 1e-8f};
        adam_step<float>(params.encoder.tensors(), opts.recon_enc, opt_recon);
        adam_step<float>(params.decoder.tensors(), opts.recon_dec, opt_recon);
        if (trace) trace->after_stage[0] = hash_all(params);

        // stage 2: discriminators on prior-vs-encoder codes; the encoder
        // outputs enter as constants
        require_grads(params, false, false, true, true);
        LatentBatch codes = encode(params, batch.a, model_cfg);
        AdamConfig<float> opt_disc{train_cfg.lr_disc, 0.9f, 0.999f, 1e-8f};
        if (!model_cfg.style_only) {
            Rng prior_rng = derive_rng(train_cfg.seed, "prior_y", static_cast<std::uint64_t>(step));
            auto real = sample_prior_y<float>(n, model_cfg.cluster_count, prior_rng);
            params.disc_y.zero_grad();
            Graph<float> g;
            auto logit_real = discriminate_graph(g, params, LatentHead::y, g.input(real), model_cfg);
            auto logit_fake = discriminate_graph(g, params, LatentHead::y, g.input(codes.y), model_cfg);
            auto loss = g.scale(g.add(g.bce_logits_loss(logit_real, g.input(Tensor<float>({n, 1}, 1.f))),
                                      g.bce_logits_loss(logit_fake, g.input(Tensor<float>({n, 1}, 0.f)))),
                                0.5f);
            report.disc_y = scalar_loss(g, loss, "stage 2 (disc_y)");
            g.backward(loss);
            adam_step<float>(params.disc_y.tensors(), opts.disc_y, opt_disc);
        }
        {
            Rng prior_rng = derive_rng(train_cfg.seed, "prior_z", static_cast<std::uint64_t>(step));
            auto real = sample_prior_z<float>(n, model_cfg.style_dim, prior_rng);
            params.disc_z.zero_grad();
            Graph<float> g;
            auto logit_real = discriminate_graph(g, params, LatentHead::z, g.input(real), model_cfg);
            auto logit_fake = discriminate_graph(g, params, LatentHead::z, g.input(codes.z), model_cfg);
            auto loss = g.scale(g.add(g.bce_logits_loss(logit_real, g.input(Tensor<float>({n, 1}, 1.f))),
                                      g.bce_logits_loss(logit_fake, g.input(Tensor<float>({n, 1}, 0.f)))),
                                0.5f);
            report.disc_z = scalar_loss(g, loss, "stage 2 (disc_z)");
            g.backward(loss);
            adam_step<float>(params.disc_z.tensors(), opts.disc_z, opt_disc);
        }
        if (trace) trace->after_stage[1] = hash_all(params);

        // stage 3: encoder alone against frozen discriminators
        require_grads(params, true, false, false, false);
        params.encoder.zero_grad();
        {
            Graph<float> g;
            auto lat = encode_graph(g, params, g.input(batch.a), model_cfg);
            Graph<float>::Id gen;
            auto ones = g.input(Tensor<float>({n, 1}, 1.f));
            if (model_cfg.style_only) {
                gen = g.bce_logits_loss(discriminate_graph(g, params, LatentHead::z, lat.z, model_cfg, true), ones);
            } else {
                auto by = g.bce_logits_loss(discriminate_graph(g, params, LatentHead::y, lat.y, model_cfg, true), ones);
                auto bz = g.bce_logits_loss(discriminate_graph(g, params, LatentHead::z, lat.z, model_cfg, true), ones);
                gen = g.add(by, bz);
            }
            auto loss = g.scale(gen, train_cfg.adv_weight);
            report.adv = scalar_loss(g, loss, "stage 3 (adversarial)");
            g.backward(loss);
        }
        AdamConfig<float> opt_adv{train_cfg.lr_adv, 0.9f, 0.999f, 1e-8f};
        adam_step<float>(params.encoder.tensors(), opts.adv_enc, opt_adv);
        if (trace) trace->after_stage[2] = hash_all(params);
    } catch (const std::exception& e) {
        snapshot.restore(params);
        throw std::runtime_error("train_step " + std::to_string(step) + " aborted: " + e.what() +
                                 " (parameters rolled back)");
    }
    return report;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'A', 'A', 'E'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian floats");

void append_floats(std::vector<std::byte>& out, const std::vector<float>& v) {
    const auto* p = reinterpret_cast<const std::byte*>(v.data());
    out.insert(out.end(), p, p + v.size() * sizeof(float));
}

const std::array<const char*, 5> kOptNames = {"recon_enc", "recon_dec", "disc_y", "disc_z", "adv_enc"};

std::array<AdamState<float>*, 5> opt_list(OptStates& o) {
    return {&o.recon_enc, &o.recon_dec, &o.disc_y, &o.disc_z, &o.adv_enc};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["model"] = nlohmann::ordered_json::parse(model_config_to_json(ckpt.model));
    header["train"] = nlohmann::ordered_json::parse(train_config_to_json(ckpt.train));
    header["step"] = ckpt.step;

    std::vector<std::byte> payload;
    auto tensors = nlohmann::ordered_json::array();
    Checkpoint& mut = const_cast<Checkpoint&>(ckpt);  // groups() is non-const; data untouched
    for (ParamGroupT<float>* group : mut.params.groups())
        for (auto& item : group->items) {
            nlohmann::ordered_json t;
            t["group"] = group->name;
            t["name"] = item.name;
            t["shape"] = item.value.shape;
            tensors.push_back(std::move(t));
            append_floats(payload, item.value.data);
        }
    header["tensors"] = std::move(tensors);

    auto opt = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < kOptNames.size(); ++i) {
        AdamState<float>& st = *opt_list(mut.opts)[i];
        nlohmann::ordered_json o;
        o["name"] = kOptNames[i];
        o["step"] = st.step;
        std::vector<std::size_t> sizes;
        for (const auto& m : st.m) sizes.push_back(m.size());
        o["sizes"] = sizes;
        opt.push_back(std::move(o));
        for (const auto& m : st.m) append_floats(payload, m);
        for (const auto& v : st.v) append_floats(payload, v);
    }
    header["opt"] = std::move(opt);
    header["payload_bytes"] = payload.size();
    header["payload_crc32"] =
        static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
                                         static_cast<uInt>(payload.size())));

    const std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out.write(kMagic, 4);
    const std::uint32_t version = kFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t hlen = header_text.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expect) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());

    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t hlen = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: " + path.string() + " is not a CAAE checkpoint");
    if (version != kFormatVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version " + std::to_string(version));

    std::string header_text(hlen, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: corrupt header: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.model = model_config_from_json(header.at("model").dump());
    ckpt.train = train_config_from_json(header.at("train").dump());
    ckpt.step = header.at("step").get<std::int64_t>();

    if (expect && !(*expect == ckpt.model))
        throw std::invalid_argument("load_checkpoint: checkpoint architecture does not match the requested config (" +
                                    model_config_to_json(ckpt.model) + " vs " + model_config_to_json(*expect) +
                                    "): shapes would disagree");

    const std::size_t payload_bytes = header.at("payload_bytes").get<std::size_t>();
    const auto want_crc = header.at("payload_crc32").get<std::uint32_t>();
    std::vector<std::byte> payload(payload_bytes);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes));
    if (static_cast<std::size_t>(in.gcount()) != payload_bytes)
        throw std::runtime_error("load_checkpoint: truncated payload in " + path.string());
    const auto got_crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    if (got_crc != want_crc)
        throw std::runtime_error("load_checkpoint: checksum mismatch in " + path.string() + " (corrupt file)");

    // canonical parameter skeleton for this architecture, then overwrite
    ckpt.params = init_params<float>(ckpt.model, 0);
    std::size_t off = 0;
    auto take_floats = [&](std::vector<float>& dst, std::size_t count, const std::string& what) {
        if (off + count * sizeof(float) > payload.size())
            throw std::runtime_error("load_checkpoint: payload too small for " + what);
        dst.resize(count);
        std::memcpy(dst.data(), payload.data() + off, count * sizeof(float));
        off += count * sizeof(float);
    };

    const auto& tensors = header.at("tensors");
    std::size_t ti = 0;
    for (ParamGroupT<float>* group : ckpt.params.groups())
        for (auto& item : group->items) {
            if (ti >= tensors.size()) throw std::runtime_error("load_checkpoint: header lists too few tensors");
            const auto& t = tensors[ti++];
            const auto shape = t.at("shape").get<Shape>();
            if (t.at("group").get<std::string>() != group->name || t.at("name").get<std::string>() != item.name ||
                shape != item.value.shape)
                throw std::runtime_error("load_checkpoint: shape mismatch at tensor '" + group->name + "." +
                                         item.name + "'");
            take_floats(item.value.data, numel(shape), group->name + "." + item.name);
        }
    if (ti != tensors.size()) throw std::runtime_error("load_checkpoint: header lists extra tensors");

    const auto& opt = header.at("opt");
    if (opt.size() != kOptNames.size()) throw std::runtime_error("load_checkpoint: unexpected optimizer state count");
    auto states = opt_list(ckpt.opts);
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& o = opt[i];
        if (o.at("name").get<std::string>() != kOptNames[i])
            throw std::runtime_error("load_checkpoint: optimizer state order mismatch");
        states[i]->step = o.at("step").get<std::int64_t>();
        const auto sizes = o.at("sizes").get<std::vector<std::size_t>>();
        states[i]->m.resize(sizes.size());
        states[i]->v.resize(sizes.size());
        for (std::size_t k = 0; k < sizes.size(); ++k)
            take_floats(states[i]->m[k], sizes[k], std::string(kOptNames[i]) + ".m");
        for (std::size_t k = 0; k < sizes.size(); ++k)
            take_floats(states[i]->v[k], sizes[k], std::string(kOptNames[i]) + ".v");
    }
    if (off != payload.size()) throw std::runtime_error("load_checkpoint: trailing bytes in payload");
    return ckpt;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

std::string format_report(const StepReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%" PRId64 ",%.9g,%.9g,%.9g,%.9g", r.step, static_cast<double>(r.recon),
                  static_cast<double>(r.disc_y), static_cast<double>(r.disc_z), static_cast<double>(r.adv));
    return buf;
}

// keep only rows from before the resume point so replayed steps appear once
void truncate_loss_log(const std::filesystem::path& csv, std::int64_t start_step) {
    if (!std::filesystem::exists(csv)) return;
    std::ifstream in(csv);
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (keep.empty() && line.rfind("step,", 0) == 0) {
            keep.push_back(line);
            continue;
        }
        const auto step = std::strtoll(line.c_str(), nullptr, 10);
        if (step < start_step) keep.push_back(line);
    }
    in.close();
    std::ofstream out(csv, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Dataset& dataset,
                  const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& resume_from,
                  const StepObserver& observer) {
    model_cfg.validate();
    train_cfg.validate();
    std::filesystem::create_directories(run_dir);

    CAAEParams params;
    OptStates opts;
    std::int64_t start_step = 0;
    if (resume_from) {
        Checkpoint ckpt = load_checkpoint(*resume_from, &model_cfg);
        if (train_config_to_json(ckpt.train) != train_config_to_json(train_cfg))
            throw std::invalid_argument("train: resuming with an altered train config is not supported");
        params = std::move(ckpt.params);
        opts = std::move(ckpt.opts);
        start_step = ckpt.step;
    } else {
        params = init_params<float>(model_cfg, train_cfg.seed);
    }

    const bool need_b = train_cfg.mode == ReconMode::A2B;
    WeightedSampler sampler(dataset, train_cfg.class_weights, train_cfg.batch_size, train_cfg.seed);

    const auto csv_path = run_dir / "losses.csv";
    if (resume_from)
        truncate_loss_log(csv_path, start_step);
    else
        std::filesystem::remove(csv_path);
    const bool fresh_csv = !std::filesystem::exists(csv_path);
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw std::runtime_error("train: cannot open loss log " + csv_path.string());
    if (fresh_csv) csv << "step,recon,disc_y,disc_z,adv\n";

    TrainResult result;
    for (std::int64_t step = start_step; step < train_cfg.steps; ++step) {
        const auto indices = sampler.sample(static_cast<std::uint64_t>(step));
        const auto batch = dataset.make_batch(indices, need_b);
        StepReport report = train_step(params, opts, {batch.a, batch.b}, model_cfg, train_cfg, step);
        csv << format_report(report) << "\n";
        result.log.push_back(report);
        if (observer) observer(report);

        const std::int64_t done = step + 1;
        if (done % train_cfg.checkpoint_every == 0 || done == train_cfg.steps) {
            Checkpoint ckpt;
            ckpt.model = model_cfg;
            ckpt.train = train_cfg;
            ckpt.step = done;
            ckpt.params = params;
            ckpt.opts = opts;
            const auto ckpt_path = run_dir / ("ckpt_" + std::to_string(done) + ".caae");
            save_checkpoint(ckpt, ckpt_path);
            result.final_checkpoint = ckpt_path;
            csv.flush();
        }
    }
    return result;
}

}  // namespace caae
