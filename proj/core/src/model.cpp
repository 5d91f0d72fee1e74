#include "caae/model.hpp"

#include <stdexcept>

#include "json.hpp"

namespace caae {

void ModelConfig::validate() const {
    if (!style_only && cluster_count < 1) throw std::invalid_argument("ModelConfig: cluster_count must be >= 1");
    if (style_dim < 1) throw std::invalid_argument("ModelConfig: style_dim must be >= 1");
    if (channels < 1) throw std::invalid_argument("ModelConfig: channels must be >= 1");
    if (conv_widths.empty()) throw std::invalid_argument("ModelConfig: conv_widths must not be empty");
    for (int w : conv_widths)
        if (w < 1) throw std::invalid_argument("ModelConfig: conv widths must be positive");
    if (disc_hidden < 1) throw std::invalid_argument("ModelConfig: disc_hidden must be >= 1");
    if (patch_size < downsample_factor() || patch_size % downsample_factor() != 0)
        throw std::invalid_argument("ModelConfig: patch_size " + std::to_string(patch_size) +
                                    " must be a positive multiple of the downsampling factor " +
                                    std::to_string(downsample_factor()));
    if (leaky_slope < 0.0f || leaky_slope >= 1.0f) throw std::invalid_argument("ModelConfig: leaky_slope out of range");
}

std::string model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["cluster_count"] = cfg.cluster_count;
    j["style_dim"] = cfg.style_dim;
    j["patch_size"] = cfg.patch_size;
    j["channels"] = cfg.channels;
    j["conv_widths"] = cfg.conv_widths;
    j["disc_hidden"] = cfg.disc_hidden;
    j["style_only"] = cfg.style_only;
    j["leaky_slope"] = cfg.leaky_slope;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.cluster_count = j.at("cluster_count").get<int>();
    cfg.style_dim = j.at("style_dim").get<int>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.conv_widths = j.at("conv_widths").get<std::vector<int>>();
    cfg.disc_hidden = j.at("disc_hidden").get<int>();
    cfg.style_only = j.at("style_only").get<bool>();
    cfg.leaky_slope = j.at("leaky_slope").get<float>();
    cfg.validate();
    return cfg;
}

template <typename T>
Tensor<T>& ParamGroupT<T>::get(std::string_view item) {
    for (auto& it : items)
        if (it.name == item) return it.value;
    throw std::invalid_argument("parameter group '" + name + "' has no tensor '" + std::string(item) + "'");
}

template <typename T>
const Tensor<T>& ParamGroupT<T>::get(std::string_view item) const {
    for (const auto& it : items)
        if (it.name == item) return it.value;
    throw std::invalid_argument("parameter group '" + name + "' has no tensor '" + std::string(item) + "'");
}

template <typename T>
std::vector<Tensor<T>*> ParamGroupT<T>::tensors() {
    std::vector<Tensor<T>*> out;
    out.reserve(items.size());
    for (auto& it : items) out.push_back(&it.value);
    return out;
}

template <typename T>
std::size_t ParamGroupT<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& it : items) n += it.value.size();
    return n;
}

template <typename T>
std::uint64_t ParamGroupT<T>::content_hash() const {
    std::uint64_t h = hash_bytes(name.data(), name.size());
    for (const auto& it : items) {
        h = hash_bytes(it.name.data(), it.name.size(), h);
        h = hash_bytes(it.value.data.data(), it.value.data.size() * sizeof(T), h);
    }
    return h;
}

template <typename T>
void ParamGroupT<T>::set_requires_grad(bool on) {
    for (auto& it : items) it.value.set_requires_grad(on);
}

template <typename T>
void ParamGroupT<T>::zero_grad() {
    for (auto& it : items) it.value.zero_grad();
}

template <typename T>
bool ParamGroupT<T>::all_finite() const {
    for (const auto& it : items)
        if (!it.value.all_finite()) return false;
    return true;
}

namespace {

template <typename T>
Tensor<T> he_normal(const Shape& shape, int fan_in, Rng& rng) {
    Tensor<T> t(shape);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.normal() * std_dev);
    return t;
}

constexpr int kKernel = 4;  // 4x4 stride-2 blocks invert exactly under the adjoint
constexpr int kStride = 2;
constexpr int kPad = 1;

}  // namespace

template <typename T>
CAAEParamsT<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng = derive_rng(seed, "init_params");
    CAAEParamsT<T> p;

    // encoder conv stack
    int prev = cfg.channels;
    for (std::size_t i = 0; i < cfg.conv_widths.size(); ++i) {
        const int w = cfg.conv_widths[i];
        const std::string base = "conv" + std::to_string(i);
        p.encoder.items.push_back({base + ".w", he_normal<T>({w, prev, kKernel, kKernel}, prev * kKernel * kKernel, rng)});
        p.encoder.items.push_back({base + ".b", Tensor<T>({w})});
        prev = w;
    }
    const int flat = cfg.flat_size();
    if (!cfg.style_only) {
        p.encoder.items.push_back({"head_y.w", he_normal<T>({flat, cfg.cluster_count}, flat, rng)});
        p.encoder.items.push_back({"head_y.b", Tensor<T>({cfg.cluster_count})});
    }
    p.encoder.items.push_back({"head_z.w", he_normal<T>({flat, cfg.style_dim}, flat, rng)});
    p.encoder.items.push_back({"head_z.b", Tensor<T>({cfg.style_dim})});

    // decoder: dense reshape then mirrored conv_transpose stack
    p.decoder.items.push_back({"fc.w", he_normal<T>({cfg.latent_size(), flat}, cfg.latent_size(), rng)});
    p.decoder.items.push_back({"fc.b", Tensor<T>({flat})});
    for (int i = static_cast<int>(cfg.conv_widths.size()) - 1; i >= 0; --i) {
        const int from = cfg.conv_widths[i];
        const int to = i > 0 ? cfg.conv_widths[i - 1] : cfg.channels;
        const std::string base = "deconv" + std::to_string(i);
        p.decoder.items.push_back({base + ".w", he_normal<T>({from, to, kKernel, kKernel}, from * kKernel * kKernel, rng)});
        p.decoder.items.push_back({base + ".b", Tensor<T>({to})});
    }

    auto make_disc = [&](ParamGroupT<T>& g, int in) {
        g.items.push_back({"fc0.w", he_normal<T>({in, cfg.disc_hidden}, in, rng)});
        g.items.push_back({"fc0.b", Tensor<T>({cfg.disc_hidden})});
        g.items.push_back({"fc1.w", he_normal<T>({cfg.disc_hidden, cfg.disc_hidden}, cfg.disc_hidden, rng)});
        g.items.push_back({"fc1.b", Tensor<T>({cfg.disc_hidden})});
        g.items.push_back({"fc2.w", he_normal<T>({cfg.disc_hidden, 1}, cfg.disc_hidden, rng)});
        g.items.push_back({"fc2.b", Tensor<T>({1})});
    };
    if (!cfg.style_only) make_disc(p.disc_y, cfg.cluster_count);
    make_disc(p.disc_z, cfg.style_dim);
    return p;
}

template <typename T>
LatentIds<T> encode_graph(Graph<T>& g, CAAEParamsT<T>& params, typename Graph<T>::Id batch, const ModelConfig& cfg) {
    const Shape shape = g.value(batch).shape;  // copy: recording nodes may reallocate
    if (shape.size() != 4 || shape[1] != cfg.channels || shape[2] != cfg.patch_size || shape[3] != cfg.patch_size)
        throw std::invalid_argument("encode: batch must be Nx" + std::to_string(cfg.channels) + "x" +
                                    std::to_string(cfg.patch_size) + "x" + std::to_string(cfg.patch_size) + ", got " +
                                    shape_str(shape));
    auto id = batch;
    for (std::size_t i = 0; i < cfg.conv_widths.size(); ++i) {
        const std::string base = "conv" + std::to_string(i);
        id = g.conv2d(id, g.param(params.encoder.get(base + ".w")), g.param(params.encoder.get(base + ".b")), kStride,
                      kPad);
        id = g.leaky_relu(id, static_cast<T>(cfg.leaky_slope));
    }
    id = g.reshape(id, {shape[0], cfg.flat_size()});
    LatentIds<T> out;
    if (!cfg.style_only) {
        auto logits = g.dense(id, g.param(params.encoder.get("head_y.w")), g.param(params.encoder.get("head_y.b")));
        out.y = g.softmax(logits, 1);
    }
    out.z = g.dense(id, g.param(params.encoder.get("head_z.w")), g.param(params.encoder.get("head_z.b")));
    return out;
}

template <typename T>
typename Graph<T>::Id decode_graph(Graph<T>& g, CAAEParamsT<T>& params, typename Graph<T>::Id y,
                                   typename Graph<T>::Id z, const ModelConfig& cfg) {
    if (g.value(z).rank() != 2 || g.value(z).shape[1] != cfg.style_dim)
        throw std::invalid_argument("decode: z must be Nx" + std::to_string(cfg.style_dim) + ", got " +
                                    shape_str(g.value(z).shape));
    typename Graph<T>::Id lat;
    if (cfg.style_only) {
        lat = z;
    } else {
        if (y < 0 || g.value(y).rank() != 2 || g.value(y).shape[1] != cfg.cluster_count)
            throw std::invalid_argument("decode: y must be Nx" + std::to_string(cfg.cluster_count));
        lat = g.concat_cols(y, z);
    }
    auto id = g.dense(lat, g.param(params.decoder.get("fc.w")), g.param(params.decoder.get("fc.b")));
    id = g.leaky_relu(id, static_cast<T>(cfg.leaky_slope));
    const int side = cfg.bottleneck_side();
    id = g.reshape(id, {g.value(lat).shape[0], cfg.conv_widths.back(), side, side});
    for (int i = static_cast<int>(cfg.conv_widths.size()) - 1; i >= 0; --i) {
        const std::string base = "deconv" + std::to_string(i);
        id = g.conv_transpose2d(id, g.param(params.decoder.get(base + ".w")), g.param(params.decoder.get(base + ".b")),
                                kStride, kPad);
        if (i > 0)
            id = g.leaky_relu(id, static_cast<T>(cfg.leaky_slope));
        else
            id = g.sigmoid(id);  // reconstructions live in (0,1)
    }
    return id;
}

template <typename T>
typename Graph<T>::Id discriminate_graph(Graph<T>& g, CAAEParamsT<T>& params, LatentHead head,
                                         typename Graph<T>::Id code, const ModelConfig& cfg, bool frozen) {
    if (head == LatentHead::y && cfg.style_only)
        throw std::invalid_argument("discriminate: no y discriminator in style_only mode");
    ParamGroupT<T>& disc = head == LatentHead::y ? params.disc_y : params.disc_z;
    const int expect = head == LatentHead::y ? cfg.cluster_count : cfg.style_dim;
    const auto& cv = g.value(code);
    if (cv.rank() != 2 || cv.shape[1] != expect)
        throw std::invalid_argument("discriminate(" + disc.name + "): code must be Nx" + std::to_string(expect) +
                                    ", got " + shape_str(cv.shape));
    auto weight = [&](std::string_view n) {
        return frozen ? g.input(disc.get(n)) : g.param(disc.get(n));
    };
    auto id = g.dense(code, weight("fc0.w"), weight("fc0.b"));
    id = g.leaky_relu(id, static_cast<T>(cfg.leaky_slope));
    id = g.dense(id, weight("fc1.w"), weight("fc1.b"));
    id = g.leaky_relu(id, static_cast<T>(cfg.leaky_slope));
    return g.dense(id, weight("fc2.w"), weight("fc2.b"));
}

template <typename T>
LatentBatchT<T> encode(CAAEParamsT<T>& params, const Tensor<T>& batch, const ModelConfig& cfg) {
    Graph<T> g;
    auto ids = encode_graph(g, params, g.input(batch), cfg);
    LatentBatchT<T> out;
    if (ids.y >= 0) out.y = g.value(ids.y);
    out.z = g.value(ids.z);
    return out;
}

template <typename T>
Tensor<T> decode(CAAEParamsT<T>& params, const Tensor<T>& y, const Tensor<T>& z, const ModelConfig& cfg) {
    Graph<T> g;
    auto yid = cfg.style_only ? -1 : g.input(y);
    return g.value(decode_graph(g, params, yid, g.input(z), cfg));
}

template <typename T>
Tensor<T> discriminate(CAAEParamsT<T>& params, LatentHead head, const Tensor<T>& code, const ModelConfig& cfg) {
    Graph<T> g;
    return g.value(discriminate_graph(g, params, head, g.input(code), cfg, true));
}

template <typename T>
Tensor<T> sample_prior_y(int n, int k, Rng& rng) {
    if (n < 1 || k < 1) throw std::invalid_argument("sample_prior_y: n and K must be >= 1");
    Tensor<T> t({n, k});
    for (int i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i) * k + rng.uniform_int(k)] = T(1);
    return t;
}

template <typename T>
Tensor<T> sample_prior_z(int n, int d, Rng& rng) {
    if (n < 1 || d < 1) throw std::invalid_argument("sample_prior_z: n and d must be >= 1");
    Tensor<T> t({n, d});
    for (auto& v : t.data) v = static_cast<T>(rng.normal());
    return t;
}

#define CAAE_INSTANTIATE_MODEL(T)                                                                                  \
    template struct ParamGroupT<T>;                                                                                \
    template CAAEParamsT<T> init_params<T>(const ModelConfig&, std::uint64_t);                                     \
    template LatentIds<T> encode_graph<T>(Graph<T>&, CAAEParamsT<T>&, typename Graph<T>::Id, const ModelConfig&);  \
    template typename Graph<T>::Id decode_graph<T>(Graph<T>&, CAAEParamsT<T>&, typename Graph<T>::Id,              \
                                                   typename Graph<T>::Id, const ModelConfig&);                     \
    template typename Graph<T>::Id discriminate_graph<T>(Graph<T>&, CAAEParamsT<T>&, LatentHead,                   \
                                                         typename Graph<T>::Id, const ModelConfig&, bool);         \
    template LatentBatchT<T> encode<T>(CAAEParamsT<T>&, const Tensor<T>&, const ModelConfig&);                     \
    template Tensor<T> decode<T>(CAAEParamsT<T>&, const Tensor<T>&, const Tensor<T>&, const ModelConfig&);         \
    template Tensor<T> discriminate<T>(CAAEParamsT<T>&, LatentHead, const Tensor<T>&, const ModelConfig&);         \
    template Tensor<T> sample_prior_y<T>(int, int, Rng&);                                                          \
    template Tensor<T> sample_prior_z<T>(int, int, Rng&);

CAAE_INSTANTIATE_MODEL(float)
CAAE_INSTANTIATE_MODEL(double)

#undef CAAE_INSTANTIATE_MODEL

}  // namespace caae
