#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "caae/graph.hpp"
#include "caae/rng.hpp"

namespace caae {

// Network layout. The latent splits into a cluster vector y (probability
// simplex, length K) and a style vector z (unbounded reals, length d).
// style_only disables the y head and its discriminator, leaving a plain
// adversarial autoencoder over z.
struct ModelConfig {
    int cluster_count = 50;  // K
    int style_dim = 20;      // d
    int patch_size = 128;
    int channels = 3;
    std::vector<int> conv_widths = {32, 64, 128, 256};  // one stride-2 4x4 block per entry
    int disc_hidden = 128;
    bool style_only = false;
    float leaky_slope = 0.2f;

    int downsample_factor() const { return 1 << static_cast<int>(conv_widths.size()); }
    int bottleneck_side() const { return patch_size / downsample_factor(); }
    int flat_size() const { return conv_widths.back() * bottleneck_side() * bottleneck_side(); }
    int latent_size() const { return style_only ? style_dim : cluster_count + style_dim; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

template <typename T>
struct NamedTensorT {
    std::string name;
    Tensor<T> value;
};

// Ordered, named parameter list; order fixes init draws, checkpoint layout
// and optimizer moment slots.
template <typename T>
struct ParamGroupT {
    std::string name;
    std::vector<NamedTensorT<T>> items;

    Tensor<T>& get(std::string_view item);
    const Tensor<T>& get(std::string_view item) const;
    std::vector<Tensor<T>*> tensors();
    std::size_t scalar_count() const;
    std::uint64_t content_hash() const;
    void set_requires_grad(bool on);
    void zero_grad();
    bool all_finite() const;
};

template <typename T>
struct CAAEParamsT {
    ParamGroupT<T> encoder{"encoder", {}};
    ParamGroupT<T> decoder{"decoder", {}};
    ParamGroupT<T> disc_y{"disc_y", {}};
    ParamGroupT<T> disc_z{"disc_z", {}};

    std::size_t scalar_count() const {
        return encoder.scalar_count() + decoder.scalar_count() + disc_y.scalar_count() + disc_z.scalar_count();
    }
    std::vector<ParamGroupT<T>*> groups() { return {&encoder, &decoder, &disc_y, &disc_z}; }
};

using CAAEParams = CAAEParamsT<float>;

// He fan-in normal weights, zero biases; identical seeds give bit-identical
// parameters.
template <typename T>
CAAEParamsT<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
struct LatentBatchT {
    Tensor<T> y;  // N x K rows on the simplex; empty in style_only mode
    Tensor<T> z;  // N x d
};
using LatentBatch = LatentBatchT<float>;

template <typename T>
struct LatentIds {
    typename Graph<T>::Id y = -1;
    typename Graph<T>::Id z = -1;
};

enum class LatentHead { y, z };

// ---- graph builders (used by the trainer and by gradient checks) ----

template <typename T>
LatentIds<T> encode_graph(Graph<T>& g, CAAEParamsT<T>& params, typename Graph<T>::Id batch, const ModelConfig& cfg);

template <typename T>
typename Graph<T>::Id decode_graph(Graph<T>& g, CAAEParamsT<T>& params, typename Graph<T>::Id y,
                                   typename Graph<T>::Id z, const ModelConfig& cfg);

// `frozen` records the discriminator weights as constants, so gradient
// flows through the layers into the code but never into the weights.
template <typename T>
typename Graph<T>::Id discriminate_graph(Graph<T>& g, CAAEParamsT<T>& params, LatentHead head,
                                         typename Graph<T>::Id code, const ModelConfig& cfg, bool frozen = false);

// ---- eager wrappers (inference; no gradients recorded) ----

template <typename T>
LatentBatchT<T> encode(CAAEParamsT<T>& params, const Tensor<T>& batch, const ModelConfig& cfg);

template <typename T>
Tensor<T> decode(CAAEParamsT<T>& params, const Tensor<T>& y, const Tensor<T>& z, const ModelConfig& cfg);

template <typename T>
Tensor<T> discriminate(CAAEParamsT<T>& params, LatentHead head, const Tensor<T>& code, const ModelConfig& cfg);

// ---- latent priors ----

// one-hot rows, category uniform over K
template <typename T>
Tensor<T> sample_prior_y(int n, int k, Rng& rng);

// i.i.d. standard normal entries
template <typename T>
Tensor<T> sample_prior_z(int n, int d, Rng& rng);

}  // namespace caae
