#include "caae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "caae/png_io.hpp"
#include "caae/rng.hpp"

namespace caae {

namespace {

// crops HWC image windows into an NCHW batch
Tensor<float> crop_batch(const Tensor<float>& image, std::span<const std::pair<int, int>> origins, int window) {
    const int w = image.shape[1];
    Tensor<float> batch({static_cast<int>(origins.size()), 3, window, window});
    const std::size_t plane = static_cast<std::size_t>(window) * window;
    for (std::size_t b = 0; b < origins.size(); ++b) {
        const auto [oy, ox] = origins[b];
        for (int y = 0; y < window; ++y)
            for (int x = 0; x < window; ++x) {
                const float* src = image.data.data() + ((static_cast<std::size_t>(oy + y) * w) + (ox + x)) * 3;
                const std::size_t px = static_cast<std::size_t>(y) * window + x;
                for (int c = 0; c < 3; ++c) batch.data[(b * 3 + c) * plane + px] = src[c];
            }
    }
    return batch;
}

template <typename Vote>
void for_each_window(const Tensor<float>& image, CAAEParams& params, const ModelConfig& cfg, int window, int stride,
                     Vote&& vote) {
    if (image.rank() != 3 || image.shape[2] != 3)
        throw std::invalid_argument("overlay: image must be HxWx3, got " + shape_str(image.shape));
    if (window != cfg.patch_size)
        throw std::invalid_argument("overlay: window " + std::to_string(window) +
                                    " must equal the encoder patch size " + std::to_string(cfg.patch_size));
    if (stride < 1) throw std::invalid_argument("overlay: stride must be >= 1");
    const int h = image.shape[0], w = image.shape[1];
    if (h < window || w < window)
        throw std::invalid_argument("overlay: image " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is smaller than the window " + std::to_string(window));

    std::vector<std::pair<int, int>> origins;
    for (int oy = 0; oy + window <= h; oy += stride)
        for (int ox = 0; ox + window <= w; ox += stride) origins.emplace_back(oy, ox);

    constexpr std::size_t kChunk = 64;
    for (std::size_t from = 0; from < origins.size(); from += kChunk) {
        const std::size_t count = std::min(kChunk, origins.size() - from);
        std::span<const std::pair<int, int>> part(origins.data() + from, count);
        auto batch = crop_batch(image, part, window);
        auto lat = encode(params, batch, cfg);
        for (std::size_t i = 0; i < count; ++i) {
            std::span<const float> row(lat.y.data.data() + i * cfg.cluster_count, cfg.cluster_count);
            vote(part[i].first, part[i].second, assign_cluster(row));
        }
    }
}

}  // namespace

OverlayMap sliding_window_overlay(const Tensor<float>& image, CAAEParams& params, const ModelConfig& cfg,
                                  const ClusterMapping& mapping, int window, int stride) {
    if (mapping.cluster_count() != cfg.cluster_count)
        throw std::invalid_argument("overlay: mapping covers " + std::to_string(mapping.cluster_count()) +
                                    " clusters but the model has " + std::to_string(cfg.cluster_count));
    OverlayMap map;
    map.height = image.shape[0];
    map.width = image.shape[1];
    map.freq.assign(static_cast<std::size_t>(map.height) * map.width * 4, 0.f);
    map.coverage.assign(static_cast<std::size_t>(map.height) * map.width, 0);

    for_each_window(image, params, cfg, window, stride, [&](int oy, int ox, int cluster) {
        const int cls = static_cast<int>(mapping.classes[cluster]);
        for (int y = oy; y < oy + window; ++y)
            for (int x = ox; x < ox + window; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * map.width + x;
                ++map.coverage[p];
                map.freq[p * 4 + cls] += 1.f;
            }
    });

    for (std::size_t p = 0; p < map.coverage.size(); ++p)
        if (map.coverage[p] > 0)
            for (int c = 0; c < 4; ++c) map.freq[p * 4 + c] /= static_cast<float>(map.coverage[p]);
    return map;
}

ClusterOverlay sliding_window_cluster_overlay(const Tensor<float>& image, CAAEParams& params, const ModelConfig& cfg,
                                              int window, int stride) {
    ClusterOverlay map;
    map.height = image.shape[0];
    map.width = image.shape[1];
    map.clusters = cfg.cluster_count;
    map.freq.assign(static_cast<std::size_t>(map.height) * map.width * cfg.cluster_count, 0.f);
    map.coverage.assign(static_cast<std::size_t>(map.height) * map.width, 0);

    for_each_window(image, params, cfg, window, stride, [&](int oy, int ox, int cluster) {
        for (int y = oy; y < oy + window; ++y)
            for (int x = ox; x < ox + window; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * map.width + x;
                ++map.coverage[p];
                map.freq[p * map.clusters + cluster] += 1.f;
            }
    });
    for (std::size_t p = 0; p < map.coverage.size(); ++p)
        if (map.coverage[p] > 0)
            for (int c = 0; c < map.clusters; ++c) map.freq[p * map.clusters + c] /= static_cast<float>(map.coverage[p]);
    return map;
}

std::vector<ExemplarHit> cluster_exemplars(const Dataset& dataset, CAAEParams& params, const ModelConfig& cfg,
                                           int cluster, int top_n) {
    if (cluster < 0 || cluster >= cfg.cluster_count)
        throw std::invalid_argument("cluster_exemplars: cluster " + std::to_string(cluster) + " out of range [0," +
                                    std::to_string(cfg.cluster_count) + ")");
    if (top_n < 1) throw std::invalid_argument("cluster_exemplars: top_n must be >= 1");
    if (dataset.size() == 0) throw std::invalid_argument("cluster_exemplars: empty dataset");

    std::vector<ExemplarHit> hits(dataset.size());
    constexpr std::size_t kChunk = 64;
    std::vector<std::size_t> indices(dataset.size());
    std::iota(indices.begin(), indices.end(), 0);
    for (std::size_t from = 0; from < indices.size(); from += kChunk) {
        const std::size_t count = std::min(kChunk, indices.size() - from);
        auto batch = dataset.make_batch({indices.data() + from, count}, false);
        auto lat = encode(params, batch.a, cfg);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t idx = from + i;
            hits[idx] = {idx, dataset.record(idx).id, lat.y.data[i * cfg.cluster_count + cluster]};
        }
    }
    std::sort(hits.begin(), hits.end(), [](const ExemplarHit& a, const ExemplarHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    hits.resize(std::min<std::size_t>(top_n, hits.size()));
    return hits;
}

// ---------------------------------------------------------------------------
// exact t-SNE
// ---------------------------------------------------------------------------

Embedding2D embed_tsne(const std::vector<std::vector<double>>& latents, double perplexity, int iters,
                       std::uint64_t seed) {
    const int n = static_cast<int>(latents.size());
    if (n < 2) throw std::invalid_argument("embed_tsne: need at least two points");
    if (n > 5000) throw std::invalid_argument("embed_tsne: exact method is capped at N=5000, got " + std::to_string(n));
    if (iters < 1) throw std::invalid_argument("embed_tsne: iters must be >= 1");
    if (!(perplexity > 0) || perplexity >= static_cast<double>(n))
        throw std::invalid_argument("embed_tsne: perplexity " + std::to_string(perplexity) +
                                    " infeasible for N=" + std::to_string(n));
    const std::size_t dim = latents.front().size();
    for (const auto& row : latents) {
        if (row.size() != dim) throw std::invalid_argument("embed_tsne: ragged latent matrix");
        for (double v : row)
            if (!std::isfinite(v)) throw std::invalid_argument("embed_tsne: non-finite latent value");
    }

    // pairwise squared distances
    std::vector<double> d2(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = latents[i][k] - latents[j][k];
                s += d * d;
            }
            d2[static_cast<std::size_t>(i) * n + j] = s;
            d2[static_cast<std::size_t>(j) * n + i] = s;
        }

    // conditional distributions with per-point bandwidth matching the
    // target entropy log(perplexity) to 1e-5
    std::vector<double> p(static_cast<std::size_t>(n) * n, 0.0);
    const double target_h = std::log(perplexity);
    std::vector<double> row(n);
    for (int i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 64; ++it) {
            double sum = 0;
            for (int j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-beta * d2[static_cast<std::size_t>(i) * n + j]);
                sum += row[j];
            }
            double h = 0;
            if (sum > 0) {
                for (int j = 0; j < n; ++j)
                    if (row[j] > 0) {
                        const double pj = row[j] / sum;
                        h -= pj * std::log(pj);
                    }
            }
            const double diff = h - target_h;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {  // too flat: sharpen
                lo = beta;
                beta = std::isinf(hi) ? beta * 2 : 0.5 * (lo + hi);
            } else {
                hi = beta;
                beta = 0.5 * (lo + hi);
            }
        }
        double sum = 0;
        for (int j = 0; j < n; ++j) {
            row[j] = j == i ? 0.0 : std::exp(-beta * d2[static_cast<std::size_t>(i) * n + j]);
            sum += row[j];
        }
        if (sum <= 0) {  // duplicate-heavy degenerate row: fall back to uniform
            for (int j = 0; j < n; ++j) row[j] = j == i ? 0.0 : 1.0;
            sum = n - 1;
        }
        for (int j = 0; j < n; ++j) p[static_cast<std::size_t>(i) * n + j] = row[j] / sum;
    }
    // symmetrize
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double v =
                (p[static_cast<std::size_t>(i) * n + j] + p[static_cast<std::size_t>(j) * n + i]) / (2.0 * n);
            p[static_cast<std::size_t>(i) * n + j] = v;
            p[static_cast<std::size_t>(j) * n + i] = v;
        }

    constexpr double kExaggeration = 12.0;
    constexpr int kExaggerationIters = 250;
    constexpr double kLearningRate = 200.0;

    Embedding2D emb;
    emb.coords.resize(n);
    Rng rng = derive_rng(seed, "tsne_init");
    for (auto& c : emb.coords) {
        c[0] = rng.normal() * 1e-2;
        c[1] = rng.normal() * 1e-2;
    }
    std::vector<std::array<double, 2>> velocity(n, {0.0, 0.0});
    std::vector<std::array<double, 2>> gains(n, {1.0, 1.0});  // reference-style adaptive step factors
    std::vector<double> q(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<std::array<double, 2>> grad(n);

    emb.kl_trace.reserve(iters);
    for (int iter = 0; iter < iters; ++iter) {
        const double exagg = iter < kExaggerationIters ? kExaggeration : 1.0;
        const double momentum = iter < kExaggerationIters ? 0.5 : 0.8;
        if (iter == kExaggerationIters) {
            // fresh optimizer state for the un-exaggerated phase; stale
            // velocities from the x12 force scale would spike the KL
            for (auto& v : velocity) v = {0.0, 0.0};
            for (auto& g : gains) g = {1.0, 1.0};
        }

        // student-t affinities
        double z = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double dx = emb.coords[i][0] - emb.coords[j][0];
                const double dy = emb.coords[i][1] - emb.coords[j][1];
                const double w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[static_cast<std::size_t>(i) * n + j] = w;
                q[static_cast<std::size_t>(j) * n + i] = w;
                z += 2.0 * w;
            }

        for (auto& g : grad) g = {0.0, 0.0};
        double kl = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                const double pij = std::max(p[idx], 1e-12);
                const double w = q[idx];
                const double qij = std::max(w / z, 1e-12);
                const double mult = 4.0 * (exagg * p[idx] - qij) * w;
                grad[i][0] += mult * (emb.coords[i][0] - emb.coords[j][0]);
                grad[i][1] += mult * (emb.coords[i][1] - emb.coords[j][1]);
                if (j > i) kl += 2.0 * p[idx] * std::log(pij / qij);
            }

        // adaptive gains; once exaggeration ends they may only damp, so
        // momentum ringing dies out instead of amplifying
        const double max_gain = iter < kExaggerationIters ? std::numeric_limits<double>::infinity() : 1.0;
        double cx = 0, cy = 0;
        for (int i = 0; i < n; ++i) {
            for (int d = 0; d < 2; ++d) {
                const bool same_dir = (grad[i][d] > 0) == (velocity[i][d] > 0);
                gains[i][d] = same_dir ? gains[i][d] * 0.8 : gains[i][d] + 0.2;
                gains[i][d] = std::clamp(gains[i][d], 0.01, max_gain);
                velocity[i][d] = momentum * velocity[i][d] - kLearningRate * gains[i][d] * grad[i][d];
                emb.coords[i][d] += velocity[i][d];
            }
            cx += emb.coords[i][0];
            cy += emb.coords[i][1];
        }
        cx /= n;
        cy /= n;
        for (auto& c : emb.coords) {
            c[0] -= cx;
            c[1] -= cy;
        }
        emb.kl_trace.push_back(kl);
    }
    emb.kl = emb.kl_trace.back();
    for (const auto& c : emb.coords)
        if (!std::isfinite(c[0]) || !std::isfinite(c[1]))
            throw std::runtime_error("embed_tsne: non-finite embedding coordinates");
    return emb;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

std::array<std::uint8_t, 3> class_color(MappedClass c) {
    switch (c) {
        case MappedClass::stroma: return {86, 170, 92};     // green
        case MappedClass::benign: return {66, 110, 224};    // blue
        case MappedClass::tumor: return {224, 58, 49};      // red
        case MappedClass::unassigned: return {150, 150, 150};
    }
    throw std::invalid_argument("unknown mapped class");
}

std::array<std::uint8_t, 3> wheel_color(int i, int n) {
    if (n < 1 || i < 0 || i >= n) throw std::invalid_argument("wheel_color: index out of range");
    const double h = 360.0 * i / n, s = 0.72, v = 0.95;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h < 60) r = c, g = x;
    else if (h < 120) r = x, g = c;
    else if (h < 180) g = c, b = x;
    else if (h < 240) g = x, b = c;
    else if (h < 300) r = x, b = c;
    else r = c, b = x;
    auto u8 = [&](double ch) { return static_cast<std::uint8_t>((ch + m) * 255.0 + 0.5); };
    return {u8(r), u8(g), u8(b)};
}

namespace {

float luminance(const float* rgb) { return 0.299f * rgb[0] + 0.587f * rgb[1] + 0.114f * rgb[2]; }

void blend_overlay_pixel(std::uint8_t* out, const float* base, const float* mix_rgb, int covered, float alpha) {
    const float g = luminance(base);
    for (int c = 0; c < 3; ++c) {
        const float v = covered ? (1.f - alpha) * g + alpha * mix_rgb[c] : g;
        out[c] = static_cast<std::uint8_t>(std::clamp(v, 0.f, 1.f) * 255.f + 0.5f);
    }
}

}  // namespace

void render_overlay(const Tensor<float>& base, const OverlayMap& overlay, const std::filesystem::path& path,
                    float alpha) {
    if (base.shape[0] != overlay.height || base.shape[1] != overlay.width)
        throw std::invalid_argument("render_overlay: base image and overlay dimensions differ");
    ImageU8 img;
    img.height = overlay.height;
    img.width = overlay.width;
    img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    for (std::size_t pixel = 0; pixel < overlay.coverage.size(); ++pixel) {
        float mix[3] = {0, 0, 0};
        for (int c = 0; c < 4; ++c) {
            const auto col = class_color(static_cast<MappedClass>(c));
            const float f = overlay.freq[pixel * 4 + c];
            for (int ch = 0; ch < 3; ++ch) mix[ch] += f * col[ch] / 255.f;
        }
        blend_overlay_pixel(img.rgb.data() + pixel * 3, base.data.data() + pixel * 3, mix,
                            overlay.coverage[pixel] > 0, alpha);
    }
    write_png(path, img);
}

void render_cluster_overlay(const Tensor<float>& base, const ClusterOverlay& overlay,
                            const std::filesystem::path& path, float alpha) {
    if (base.shape[0] != overlay.height || base.shape[1] != overlay.width)
        throw std::invalid_argument("render_cluster_overlay: base image and overlay dimensions differ");
    ImageU8 img;
    img.height = overlay.height;
    img.width = overlay.width;
    img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    for (std::size_t pixel = 0; pixel < overlay.coverage.size(); ++pixel) {
        float mix[3] = {0, 0, 0};
        for (int c = 0; c < overlay.clusters; ++c) {
            const auto col = wheel_color(c, overlay.clusters);
            const float f = overlay.freq[pixel * overlay.clusters + c];
            for (int ch = 0; ch < 3; ++ch) mix[ch] += f * col[ch] / 255.f;
        }
        blend_overlay_pixel(img.rgb.data() + pixel * 3, base.data.data() + pixel * 3, mix,
                            overlay.coverage[pixel] > 0, alpha);
    }
    write_png(path, img);
}

void render_embedding(const Embedding2D& embedding, std::span<const int> color_ids, int palette_size,
                      const std::filesystem::path& path, int canvas) {
    const std::size_t n = embedding.coords.size();
    if (n == 0) throw std::invalid_argument("render_embedding: empty embedding");
    if (color_ids.size() != n) throw std::invalid_argument("render_embedding: one color id per point required");
    if (canvas < 64) throw std::invalid_argument("render_embedding: canvas too small");

    double xmin = embedding.coords[0][0], xmax = xmin, ymin = embedding.coords[0][1], ymax = ymin;
    for (const auto& c : embedding.coords) {
        xmin = std::min(xmin, c[0]);
        xmax = std::max(xmax, c[0]);
        ymin = std::min(ymin, c[1]);
        ymax = std::max(ymax, c[1]);
    }
    const double spanx = std::max(xmax - xmin, 1e-9), spany = std::max(ymax - ymin, 1e-9);
    const int margin = 24;
    const double scale = (canvas - 2.0 * margin) / std::max(spanx, spany);

    ImageU8 img;
    img.height = img.width = canvas;
    img.rgb.assign(static_cast<std::size_t>(canvas) * canvas * 3, 255);
    for (std::size_t i = 0; i < n; ++i) {
        const int px = margin + static_cast<int>((embedding.coords[i][0] - xmin) * scale);
        const int py = margin + static_cast<int>((embedding.coords[i][1] - ymin) * scale);
        const auto col = wheel_color(color_ids[i] % std::max(palette_size, 1), std::max(palette_size, 1));
        constexpr int r = 3;
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                if (dx * dx + dy * dy > r * r) continue;
                const int x = px + dx, y = py + dy;
                if (x < 0 || x >= canvas || y < 0 || y >= canvas) continue;
                std::uint8_t* out = img.rgb.data() + (static_cast<std::size_t>(y) * canvas + x) * 3;
                out[0] = col[0];
                out[1] = col[1];
                out[2] = col[2];
            }
    }
    write_png(path, img);
}

void render_exemplar_grid(const std::vector<Tensor<float>>& patches, int rows, int cols,
                          const std::filesystem::path& path) {
    if (patches.empty()) throw std::invalid_argument("render_exemplar_grid: no patches given, nothing written");
    if (rows < 1 || cols < 1) throw std::invalid_argument("render_exemplar_grid: grid must be at least 1x1");
    if (static_cast<std::size_t>(rows) * cols < patches.size())
        throw std::invalid_argument("render_exemplar_grid: grid smaller than the patch list");
    const int s = patches.front().shape[0];
    for (const auto& p : patches)
        if (p.rank() != 3 || p.shape[0] != s || p.shape[1] != s || p.shape[2] != 3)
            throw std::invalid_argument("render_exemplar_grid: patches must share an SxSx3 shape");

    constexpr int gutter = 2;
    ImageU8 img;
    img.height = rows * s + (rows + 1) * gutter;
    img.width = cols * s + (cols + 1) * gutter;
    img.rgb.assign(static_cast<std::size_t>(img.height) * img.width * 3, 255);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const int gr = static_cast<int>(i) / cols, gc = static_cast<int>(i) % cols;
        const int oy = gutter + gr * (s + gutter), ox = gutter + gc * (s + gutter);
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const float* src = patches[i].data.data() + (static_cast<std::size_t>(y) * s + x) * 3;
                std::uint8_t* dst = img.rgb.data() + (static_cast<std::size_t>(oy + y) * img.width + ox + x) * 3;
                for (int c = 0; c < 3; ++c)
                    dst[c] = static_cast<std::uint8_t>(std::clamp(src[c], 0.f, 1.f) * 255.f + 0.5f);
            }
    }
    write_png(path, img);
}

void write_overlay_csv(const OverlayMap& overlay, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_overlay_csv: cannot open " + path.string());
    out << "x,y,coverage,stroma,benign,tumor,unassigned\n";
    char buf[160];
    for (int y = 0; y < overlay.height; ++y)
        for (int x = 0; x < overlay.width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * overlay.width + x;
            std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f,%.6f,%.6f,%.6f\n", x, y, overlay.coverage[p],
                          overlay.freq[p * 4 + 0], overlay.freq[p * 4 + 1], overlay.freq[p * 4 + 2],
                          overlay.freq[p * 4 + 3]);
            out << buf;
        }
}

void write_embedding_csv(const Embedding2D& embedding, std::span<const std::string> ids,
                         std::span<const int> clusters, std::span<const TissueClass> classes,
                         const std::filesystem::path& path) {
    const std::size_t n = embedding.coords.size();
    if (ids.size() != n || clusters.size() != n || classes.size() != n)
        throw std::invalid_argument("write_embedding_csv: column lengths differ");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_embedding_csv: cannot open " + path.string());
    out << "id,x,y,cluster,class\n";
    char buf[192];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%d,%s\n", ids[i].c_str(), embedding.coords[i][0],
                      embedding.coords[i][1], clusters[i], std::string(to_string(classes[i])).c_str());
        out << buf;
    }
}

}  // namespace caae
