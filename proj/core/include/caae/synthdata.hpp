#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "caae/png_io.hpp"
#include "caae/rng.hpp"
#include "caae/tensor.hpp"

namespace caae {

enum class TissueClass { stroma = 0, benign = 1, tumor = 2 };
inline constexpr int kTissueClassCount = 3;

std::string_view to_string(TissueClass c);
TissueClass tissue_class_from_string(std::string_view s);

// Registered pair of domain images with the generator's ground truth.
// Images are H x W x 3 in [0,1]. The label travels in manifests and the
// evaluation path only; the trainer never sees it.
struct PatchPair {
    std::string id;
    TissueClass class_label = TissueClass::stroma;
    Tensor<float> image_a;  // H&E analog
    Tensor<float> image_b;  // IHC analog
};

struct GenConfig {
    int patch_size = 64;
    std::array<int, 3> counts = {2000, 2000, 2000};  // stroma, benign, tumor
    float subtlety = 0.6f;  // 0 = benign/tumor blatant in domain A, 1 = nearly identical there
    int jitter = 1;         // max |displacement| of domain B content, pixels
    float noise = 0.02f;    // gaussian pixel noise sigma
    float tumor_benign_contamination = 0.05f;  // tumor patches that also carry one benign gland
    std::uint64_t seed = 1;

    void validate() const;
};

std::string gen_config_to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const std::string& text);

// Domain-B stain colors and the tolerance used to count marker pixels.
inline constexpr std::array<float, 3> kEpithelialMarkerColor = {0.58f, 0.33f, 0.12f};
inline constexpr std::array<float, 3> kBasalMarkerColor = {0.35f, 0.12f, 0.45f};

struct MarkerCoverage {
    double epithelial = 0;  // fraction of pixels
    double basal = 0;
};
MarkerCoverage marker_coverage(const Tensor<float>& image_b);

// Binary mask of pixels within color tolerance of `color`.
std::vector<std::uint8_t> marker_mask(const Tensor<float>& image_b, const std::array<float, 3>& color);

// ---- generation ----

// Stroma: fibrous texture in A, near-empty B. Benign: ringed glands in A,
// epithelial marker on walls plus basal marker on perimeters in B. Tumor:
// subtly perturbed glands in A (subtlety knob), epithelial marker with no
// basal perimeter in B.
PatchPair gen_patch_pair(TissueClass cls, const GenConfig& cfg, Rng& rng);

// Writes paired PNGs plus a JSON-lines manifest; byte-identical per seed.
std::filesystem::path gen_dataset(const GenConfig& cfg, const std::filesystem::path& out_dir);

// Wide domain-A scene with per-pixel ground truth, for sliding-window runs.
struct CompositeScene {
    int height = 0, width = 0;
    Tensor<float> image;                  // H x W x 3, domain A
    std::vector<std::uint8_t> class_map;  // H*W entries of TissueClass
};
CompositeScene gen_composite(const GenConfig& cfg, int height, int width, Rng& rng);

// ---- loading ----

struct ManifestRecord {
    std::string id;
    TissueClass class_label;
    std::string path_a;
    std::string path_b;
};

class Dataset {
public:
    static Dataset load(const std::filesystem::path& manifest_path);

    std::size_t size() const { return records_.size(); }
    const ManifestRecord& record(std::size_t i) const { return records_.at(i); }
    const std::vector<ManifestRecord>& records() const { return records_; }
    int patch_size() const;

    // Decodes (and caches) both PNGs; validates shapes and value range.
    PatchPair load_pair(std::size_t i) const;

    struct Batch {
        Tensor<float> a;  // N x C x H x W
        Tensor<float> b;  // empty when not requested
    };
    Batch make_batch(std::span<const std::size_t> indices, bool need_b) const;

    std::vector<std::size_t> indices_of(TissueClass c) const;

private:
    std::filesystem::path root_;
    std::vector<ManifestRecord> records_;
    mutable std::vector<std::optional<ImageU8>> cache_a_, cache_b_;
    mutable std::unique_ptr<std::mutex> cache_mutex_ = std::make_unique<std::mutex>();

    const ImageU8& image_u8(std::size_t i, bool domain_b) const;
};

// Seed-deterministic i.i.d. class-weighted draw with replacement; batch t
// depends only on (seed, t), so interrupted runs resume mid-stream.
class WeightedSampler {
public:
    WeightedSampler(const Dataset& dataset, std::array<double, 3> class_weights, int batch_size, std::uint64_t seed);

    std::vector<std::size_t> sample(std::uint64_t step) const;
    int batch_size() const { return batch_size_; }

private:
    std::array<std::vector<std::size_t>, 3> by_class_;
    std::array<double, 3> cumulative_{};
    int batch_size_;
    std::uint64_t seed_;
};

// ---- conversions ----

ImageU8 to_u8(const Tensor<float>& hwc);
Tensor<float> to_float(const ImageU8& image);

}  // namespace caae
