#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "caae/cluster_eval.hpp"
#include "caae/model.hpp"
#include "caae/synthdata.hpp"

namespace caae {

// Per-pixel class-frequency map from encoding overlapping windows.
// Frequencies over (stroma, benign, tumor, unassigned) sum to 1 wherever
// at least one window covers the pixel and are exactly 0 elsewhere.
struct OverlayMap {
    int height = 0, width = 0;
    std::vector<float> freq;    // H*W*4
    std::vector<int> coverage;  // windows covering each pixel

    float frequency(int y, int x, int c) const {
        return freq[(static_cast<std::size_t>(y) * width + x) * 4 + c];
    }
};

// `window` must equal the encoder's patch size; `stride` >= 1.
OverlayMap sliding_window_overlay(const Tensor<float>& image, CAAEParams& params, const ModelConfig& cfg,
                                  const ClusterMapping& mapping, int window, int stride);

// Raw-cluster variant (K colors instead of mapped classes).
struct ClusterOverlay {
    int height = 0, width = 0, clusters = 0;
    std::vector<float> freq;  // H*W*K
    std::vector<int> coverage;
};
ClusterOverlay sliding_window_cluster_overlay(const Tensor<float>& image, CAAEParams& params, const ModelConfig& cfg,
                                              int window, int stride);

// Patches ranked by the y_k activation of one cluster, descending;
// ties break on the id.
struct ExemplarHit {
    std::size_t index = 0;
    std::string id;
    float score = 0;
};
std::vector<ExemplarHit> cluster_exemplars(const Dataset& dataset, CAAEParams& params, const ModelConfig& cfg,
                                           int cluster, int top_n);

// Exact O(N^2) t-SNE: per-point bandwidth by binary search (entropy
// tolerance 1e-5), symmetrized P, early exaggeration x12 for the first 250
// iterations, momentum 0.5 -> 0.8 at iteration 250, learning rate 200.
struct Embedding2D {
    std::vector<std::array<double, 2>> coords;
    double kl = 0;                 // final KL divergence
    std::vector<double> kl_trace;  // KL after every iteration
};
Embedding2D embed_tsne(const std::vector<std::vector<double>>& latents, double perplexity, int iters,
                       std::uint64_t seed);

// ---- figure-style rendering (deterministic PNGs) ----

std::array<std::uint8_t, 3> class_color(MappedClass c);
std::array<std::uint8_t, 3> wheel_color(int i, int n);

void render_overlay(const Tensor<float>& base, const OverlayMap& overlay, const std::filesystem::path& path,
                    float alpha = 0.55f);
void render_cluster_overlay(const Tensor<float>& base, const ClusterOverlay& overlay,
                            const std::filesystem::path& path, float alpha = 0.55f);
void render_embedding(const Embedding2D& embedding, std::span<const int> color_ids, int palette_size,
                      const std::filesystem::path& path, int canvas = 800);
void render_exemplar_grid(const std::vector<Tensor<float>>& patches, int rows, int cols,
                          const std::filesystem::path& path);

void write_overlay_csv(const OverlayMap& overlay, const std::filesystem::path& path);
void write_embedding_csv(const Embedding2D& embedding, std::span<const std::string> ids,
                         std::span<const int> clusters, std::span<const TissueClass> classes,
                         const std::filesystem::path& path);

}  // namespace caae
