#include "caae/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace caae {

std::string_view to_string(TissueClass c) {
    switch (c) {
        case TissueClass::stroma: return "stroma";
        case TissueClass::benign: return "benign";
        case TissueClass::tumor: return "tumor";
    }
    throw std::invalid_argument("unknown tissue class");
}

TissueClass tissue_class_from_string(std::string_view s) {
    if (s == "stroma") return TissueClass::stroma;
    if (s == "benign") return TissueClass::benign;
    if (s == "tumor") return TissueClass::tumor;
    throw std::invalid_argument("unknown tissue class '" + std::string(s) + "'");
}

void GenConfig::validate() const {
    if (patch_size < 16) throw std::invalid_argument("GenConfig: patch_size must be >= 16");
    for (int c : counts)
        if (c < 0) throw std::invalid_argument("GenConfig: class counts must be >= 0");
    if (subtlety < 0.f || subtlety > 1.f) throw std::invalid_argument("GenConfig: subtlety must be in [0,1]");
    if (jitter < 0) throw std::invalid_argument("GenConfig: jitter must be >= 0");
    if (noise < 0.f || noise > 0.2f) throw std::invalid_argument("GenConfig: noise must be in [0,0.2]");
    if (tumor_benign_contamination < 0.f || tumor_benign_contamination > 1.f)
        throw std::invalid_argument("GenConfig: contamination must be in [0,1]");
}

std::string gen_config_to_json(const GenConfig& cfg) {
    nlohmann::ordered_json j;
    j["patch_size"] = cfg.patch_size;
    j["counts"] = cfg.counts;
    j["subtlety"] = cfg.subtlety;
    j["jitter"] = cfg.jitter;
    j["noise"] = cfg.noise;
    j["tumor_benign_contamination"] = cfg.tumor_benign_contamination;
    j["seed"] = cfg.seed;
    return j.dump();
}

GenConfig gen_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GenConfig cfg;
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.counts = j.at("counts").get<std::array<int, 3>>();
    cfg.subtlety = j.at("subtlety").get<float>();
    cfg.jitter = j.at("jitter").get<int>();
    cfg.noise = j.at("noise").get<float>();
    cfg.tumor_benign_contamination = j.at("tumor_benign_contamination").get<float>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// procedural rendering
// ---------------------------------------------------------------------------

namespace {

constexpr float kMarkerTolerance = 0.20f;  // RGB distance that still counts as a marker pixel
constexpr float kBasalBandPx = 3.0f;

struct Gland {
    float cx, cy;
    float r;
    float amp[3];
    float phase[3];
    float wall_frac;
    bool basal;
    float nuc_spacing;
    float nuc_jitter;
    float tint;  // small per-gland brightness variation
};

float ring_radius(const Gland& g, float theta) {
    constexpr int harmonics[3] = {2, 3, 5};
    float s = 1.f;
    for (int i = 0; i < 3; ++i) s += g.amp[i] * std::sin(harmonics[i] * theta + g.phase[i]);
    return g.r * s;
}

// morphology ranges; tumor interpolates from benign-like (t=0) to its
// extreme (t=1), where t = 1 - subtlety
struct Morph {
    float r_lo, r_hi;
    float wob_lo, wob_hi;
    float wall_frac;
    float nuc_spacing, nuc_jitter;
    int count_lo, count_hi;
    bool basal;
};

float lerp(float a, float b, float t) { return a + (b - a) * t; }

Morph benign_morph() { return {0.17f, 0.23f, 0.00f, 0.04f, 0.38f, 4.5f, 0.5f, 1, 2, true}; }

// Tumor differs from benign in domain A only through morphology: boundary
// wobble, lumen size (wall fraction) and nuclear disorder, all scaled by
// t = 1 - subtlety. The radius shrinks so the expected wall area matches
// benign exactly; occupancy statistics carry no class signal.
Morph tumor_morph(float t) {
    const Morph b = benign_morph();
    Morph m = b;
    m.wall_frac = lerp(b.wall_frac, 0.85f, t);
    const float area_b = 1.f - (1.f - b.wall_frac) * (1.f - b.wall_frac);
    const float area_t = 1.f - (1.f - m.wall_frac) * (1.f - m.wall_frac);
    const float shrink = std::sqrt(area_b / area_t);
    m.r_lo = b.r_lo * shrink;
    m.r_hi = b.r_hi * shrink;
    m.wob_lo = lerp(0.00f, 0.05f, t);
    m.wob_hi = lerp(0.04f, 0.12f, t);
    m.nuc_spacing = lerp(4.5f, 3.6f, t);
    m.nuc_jitter = lerp(0.5f, 2.5f, t);
    m.basal = false;
    return m;
}

Gland draw_gland(const Morph& m, int patch, Rng& rng) {
    Gland g;
    g.cx = static_cast<float>(rng.uniform(0.28, 0.72)) * patch;
    g.cy = static_cast<float>(rng.uniform(0.28, 0.72)) * patch;
    g.r = static_cast<float>(rng.uniform(m.r_lo, m.r_hi)) * patch;
    for (int i = 0; i < 3; ++i) {
        g.amp[i] = static_cast<float>(rng.uniform(m.wob_lo, m.wob_hi));
        g.phase[i] = static_cast<float>(rng.uniform(0.0, 2.0 * std::numbers::pi));
    }
    g.wall_frac = m.wall_frac;
    g.basal = m.basal;
    g.nuc_spacing = m.nuc_spacing;
    g.nuc_jitter = m.nuc_jitter;
    g.tint = static_cast<float>(rng.uniform(-0.02, 0.02));
    return g;
}

enum Region : std::uint8_t { kBg = 0, kWall = 1, kLumen = 2, kBasal = 3 };

struct RegionHit {
    Region region = kBg;
    int owner = -1;
};

RegionHit classify(float x, float y, std::span<const Gland> glands, float ox = 0.f, float oy = 0.f) {
    RegionHit hit;
    float best = std::numeric_limits<float>::max();
    for (std::size_t i = 0; i < glands.size(); ++i) {
        const Gland& g = glands[i];
        const float dx = x - (g.cx + ox);
        const float dy = y - (g.cy + oy);
        const float dist = std::sqrt(dx * dx + dy * dy);
        if (dist > 2.5f * g.r + kBasalBandPx) continue;
        const float theta = std::atan2(dy, dx);
        const float d = dist - ring_radius(g, theta);
        if (d < best) {
            best = d;
            hit.owner = static_cast<int>(i);
        }
    }
    if (hit.owner < 0) return hit;
    const Gland& own = glands[hit.owner];
    const float wall_px = own.wall_frac * own.r;
    if (best <= 0.f)
        hit.region = best >= -wall_px ? kWall : kLumen;
    else if (own.basal && best <= kBasalBandPx)
        hit.region = kBasal;
    return hit;
}

struct FiberField {
    float k1, a1, p1, k2, a2, p2;
    float amp;

    static FiberField draw(int patch, float amp, Rng& rng) {
        FiberField f;
        const float base = 2.f * static_cast<float>(std::numbers::pi) / patch;
        f.k1 = base * static_cast<float>(rng.uniform(3.0, 7.0));
        f.a1 = static_cast<float>(rng.uniform(0.0, std::numbers::pi));
        f.p1 = static_cast<float>(rng.uniform(0.0, 2.0 * std::numbers::pi));
        f.k2 = base * static_cast<float>(rng.uniform(3.0, 7.0));
        f.a2 = static_cast<float>(rng.uniform(0.0, std::numbers::pi));
        f.p2 = static_cast<float>(rng.uniform(0.0, 2.0 * std::numbers::pi));
        f.amp = amp;
        return f;
    }

    float at(float x, float y) const {
        const float v = 0.5f + amp * (0.56f * std::sin(k1 * (x * std::cos(a1) + y * std::sin(a1)) + p1) +
                                      0.44f * std::sin(k2 * (x * std::cos(a2) + y * std::sin(a2)) + p2));
        return std::clamp(v, 0.f, 1.f);
    }
};

struct Rgb {
    float r, g, b;
};

Rgb mix(const Rgb& a, const Rgb& b, float t) { return {lerp(a.r, b.r, t), lerp(a.g, b.g, t), lerp(a.b, b.b, t)}; }

// domain A palette
constexpr Rgb kStromaPink{0.91f, 0.78f, 0.85f};
constexpr Rgb kStromaMauve{0.78f, 0.62f, 0.78f};
constexpr Rgb kWallColorA{0.56f, 0.42f, 0.66f};
constexpr Rgb kLumenColorA{0.93f, 0.87f, 0.92f};
constexpr Rgb kNucleusColorA{0.30f, 0.17f, 0.45f};

// domain B palette
constexpr Rgb kBackgroundB{0.96f, 0.95f, 0.93f};
constexpr Rgb kEpithelialB{kEpithelialMarkerColor[0], kEpithelialMarkerColor[1], kEpithelialMarkerColor[2]};
constexpr Rgb kBasalB{kBasalMarkerColor[0], kBasalMarkerColor[1], kBasalMarkerColor[2]};

void put(Tensor<float>& img, int y, int x, const Rgb& c) {
    float* p = img.data.data() + (static_cast<std::size_t>(y) * img.shape[1] + x) * 3;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
}

void splat_nucleus(Tensor<float>& img, float cx, float cy, float radius, const Rgb& color) {
    const int h = img.shape[0], w = img.shape[1];
    const int x0 = std::max(0, static_cast<int>(cx - radius - 1));
    const int x1 = std::min(w - 1, static_cast<int>(cx + radius + 1));
    const int y0 = std::max(0, static_cast<int>(cy - radius - 1));
    const int y1 = std::min(h - 1, static_cast<int>(cy + radius + 1));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const float dx = x - cx, dy = y - cy;
            const float d = std::sqrt(dx * dx + dy * dy);
            const float wgt = std::clamp(radius - d + 0.5f, 0.f, 1.f);
            if (wgt <= 0) continue;
            float* p = img.data.data() + (static_cast<std::size_t>(y) * w + x) * 3;
            p[0] = lerp(p[0], color.r, wgt);
            p[1] = lerp(p[1], color.g, wgt);
            p[2] = lerp(p[2], color.b, wgt);
        }
}

// nuclei ring along a gland wall; order of rng draws is part of the
// generator's determinism contract
void draw_gland_nuclei(Tensor<float>& img, const Gland& g, Rng& rng) {
    const float perim = 2.f * static_cast<float>(std::numbers::pi) * g.r;
    const int n = std::max(3, static_cast<int>(perim / g.nuc_spacing));
    const float wall_px = g.wall_frac * g.r;
    for (int i = 0; i < n; ++i) {
        const float theta = 2.f * static_cast<float>(std::numbers::pi) * i / n +
                            static_cast<float>(rng.uniform(-0.5, 0.5)) / std::max(g.r, 1.f);
        const float ring = ring_radius(g, theta);
        const float rad = ring - 0.5f * wall_px + static_cast<float>(rng.uniform(-1.0, 1.0)) * g.nuc_jitter;
        const float cx = g.cx + rad * std::cos(theta);
        const float cy = g.cy + rad * std::sin(theta);
        splat_nucleus(img, cx, cy, 1.3f, kNucleusColorA);
    }
}

void add_noise(Tensor<float>& img, float sigma, Rng& rng) {
    for (auto& v : img.data) v = std::clamp(v + static_cast<float>(rng.normal()) * sigma, 0.f, 1.f);
}

// wall-area fraction of a gland set, coarse scan
float wall_fraction(std::span<const Gland> glands, int patch) {
    int wall = 0, total = 0;
    for (int y = 0; y < patch; y += 2)
        for (int x = 0; x < patch; x += 2) {
            ++total;
            if (classify(x + 0.5f, y + 0.5f, glands).region == kWall) ++wall;
        }
    return static_cast<float>(wall) / static_cast<float>(total);
}

void render_pair(Tensor<float>& a, Tensor<float>& b, std::span<const Gland> glands, const FiberField& fiber,
                 float jitter_x, float jitter_y) {
    const int h = a.shape[0], w = a.shape[1];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float fx = x + 0.5f, fy = y + 0.5f;
            const float f = fiber.at(fx, fy);

            const RegionHit ha = classify(fx, fy, glands);
            Rgb ca = mix(kStromaPink, kStromaMauve, f);
            if (ha.region == kWall) {
                const float tint = glands[ha.owner].tint;
                ca = {kWallColorA.r + tint, kWallColorA.g + tint, kWallColorA.b + tint};
            } else if (ha.region == kLumen) {
                ca = kLumenColorA;
            }
            put(a, y, x, ca);

            const RegionHit hb = classify(fx, fy, glands, jitter_x, jitter_y);
            Rgb cb = {kBackgroundB.r - 0.02f * f, kBackgroundB.g - 0.01f * f, kBackgroundB.b};
            if (hb.region == kWall) {
                const float tint = glands[hb.owner].tint;
                cb = {kEpithelialB.r + tint, kEpithelialB.g + tint, kEpithelialB.b + tint};
            } else if (hb.region == kBasal) {
                cb = kBasalB;
            }
            put(b, y, x, cb);
        }
}

}  // namespace

MarkerCoverage marker_coverage(const Tensor<float>& image_b) {
    const auto epi = marker_mask(image_b, kEpithelialMarkerColor);
    const auto bas = marker_mask(image_b, kBasalMarkerColor);
    MarkerCoverage cov;
    for (std::uint8_t v : epi) cov.epithelial += v;
    for (std::uint8_t v : bas) cov.basal += v;
    cov.epithelial /= static_cast<double>(epi.size());
    cov.basal /= static_cast<double>(bas.size());
    return cov;
}

std::vector<std::uint8_t> marker_mask(const Tensor<float>& image_b, const std::array<float, 3>& color) {
    if (image_b.rank() != 3 || image_b.shape[2] != 3)
        throw std::invalid_argument("marker_mask: image must be HxWx3, got " + shape_str(image_b.shape));
    const std::size_t n = static_cast<std::size_t>(image_b.shape[0]) * image_b.shape[1];
    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const float* p = image_b.data.data() + i * 3;
        const float dr = p[0] - color[0], dg = p[1] - color[1], db = p[2] - color[2];
        mask[i] = std::sqrt(dr * dr + dg * dg + db * db) < kMarkerTolerance ? 1 : 0;
    }
    return mask;
}

PatchPair gen_patch_pair(TissueClass cls, const GenConfig& cfg, Rng& rng) {
    cfg.validate();
    const int s = cfg.patch_size;
    PatchPair pair;
    pair.class_label = cls;
    pair.image_a = Tensor<float>({s, s, 3});
    pair.image_b = Tensor<float>({s, s, 3});

    const float t = 1.f - cfg.subtlety;
    const FiberField fiber = FiberField::draw(s, cls == TissueClass::stroma ? 0.5f : 0.3f, rng);

    std::vector<Gland> glands;
    if (cls != TissueClass::stroma) {
        const Morph m = cls == TissueClass::benign ? benign_morph() : tumor_morph(t);
        const int count = rng.uniform_int(m.count_lo, m.count_hi);
        for (int i = 0; i < count; ++i) glands.push_back(draw_gland(m, s, rng));
        // keep the epithelial signal well above the marker-coverage floor
        for (int extra = 0; extra < 8 && wall_fraction(glands, s) < 0.11f; ++extra)
            glands.push_back(draw_gland(m, s, rng));
        if (cls == TissueClass::tumor && rng.uniform() < cfg.tumor_benign_contamination)
            glands.push_back(draw_gland(benign_morph(), s, rng));
    }

    const float jx = cfg.jitter > 0 ? static_cast<float>(rng.uniform_int(-cfg.jitter, cfg.jitter)) : 0.f;
    const float jy = cfg.jitter > 0 ? static_cast<float>(rng.uniform_int(-cfg.jitter, cfg.jitter)) : 0.f;

    render_pair(pair.image_a, pair.image_b, glands, fiber, jx, jy);

    for (const Gland& g : glands) draw_gland_nuclei(pair.image_a, g, rng);
    const int stray = rng.uniform_int(2, 5);  // fibroblast nuclei in the stroma background
    for (int i = 0; i < stray; ++i) {
        const float cx = static_cast<float>(rng.uniform(0.0, 1.0)) * s;
        const float cy = static_cast<float>(rng.uniform(0.0, 1.0)) * s;
        if (classify(cx, cy, glands).region == kBg) splat_nucleus(pair.image_a, cx, cy, 1.1f, kNucleusColorA);
    }

    add_noise(pair.image_a, cfg.noise, rng);
    add_noise(pair.image_b, cfg.noise, rng);
    return pair;
}

std::filesystem::path gen_dataset(const GenConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir / "images");
    const auto manifest_path = out_dir / "manifest.jsonl";
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw std::runtime_error("gen_dataset: cannot write " + manifest_path.string());

    for (int c = 0; c < kTissueClassCount; ++c) {
        const auto cls = static_cast<TissueClass>(c);
        for (int i = 0; i < cfg.counts[c]; ++i) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "%s_%06d", std::string(to_string(cls)).c_str(), i);
            const std::string id = idbuf;
            Rng rng = derive_rng(cfg.seed, id);
            PatchPair pair = gen_patch_pair(cls, cfg, rng);
            pair.id = id;
            const std::string rel_a = "images/" + id + "_a.png";
            const std::string rel_b = "images/" + id + "_b.png";
            write_png(out_dir / rel_a, to_u8(pair.image_a));
            write_png(out_dir / rel_b, to_u8(pair.image_b));
            nlohmann::ordered_json line;
            line["id"] = id;
            line["class"] = to_string(cls);
            line["path_a"] = rel_a;
            line["path_b"] = rel_b;
            manifest << line.dump() << "\n";
        }
    }
    manifest.close();
    if (!manifest) throw std::runtime_error("gen_dataset: write failed for " + manifest_path.string());
    return manifest_path;
}

CompositeScene gen_composite(const GenConfig& cfg, int height, int width, Rng& rng) {
    cfg.validate();
    if (height < cfg.patch_size || width < cfg.patch_size)
        throw std::invalid_argument("gen_composite: scene smaller than a patch");
    CompositeScene scene;
    scene.height = height;
    scene.width = width;
    scene.image = Tensor<float>({height, width, 3});
    scene.class_map.assign(static_cast<std::size_t>(height) * width, 0);

    // smooth class field: argmax of three random low-frequency mixtures
    struct Field {
        float ux[3], uy[3], ph[3], a[3];
    };
    Field fields[3];
    for (auto& f : fields)
        for (int j = 0; j < 3; ++j) {
            const float freq = 2.f * static_cast<float>(std::numbers::pi) / std::min(height, width) *
                               static_cast<float>(rng.uniform(1.0, 3.0));
            const float dir = static_cast<float>(rng.uniform(0.0, 2.0 * std::numbers::pi));
            f.ux[j] = freq * std::cos(dir);
            f.uy[j] = freq * std::sin(dir);
            f.ph[j] = static_cast<float>(rng.uniform(0.0, 2.0 * std::numbers::pi));
            f.a[j] = static_cast<float>(rng.uniform(0.5, 1.0));
        }
    auto field_at = [&](int c, float x, float y) {
        float s = 0;
        for (int j = 0; j < 3; ++j) s += fields[c].a[j] * std::cos(fields[c].ux[j] * x + fields[c].uy[j] * y + fields[c].ph[j]);
        return s;
    };
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            int best = 0;
            float bv = field_at(0, static_cast<float>(x), static_cast<float>(y));
            for (int c = 1; c < 3; ++c) {
                const float v = field_at(c, static_cast<float>(x), static_cast<float>(y));
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            scene.class_map[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint8_t>(best);
        }

    // glands on a jittered grid wherever the class field says epithelium
    const float t = 1.f - cfg.subtlety;
    std::vector<Gland> glands;
    const int step = std::max(20, cfg.patch_size / 2);
    for (int gy = step / 2; gy < height; gy += step)
        for (int gx = step / 2; gx < width; gx += step) {
            const float cx = gx + static_cast<float>(rng.uniform(-0.3, 0.3)) * step;
            const float cy = gy + static_cast<float>(rng.uniform(-0.3, 0.3)) * step;
            const int xi = std::clamp(static_cast<int>(cx), 0, width - 1);
            const int yi = std::clamp(static_cast<int>(cy), 0, height - 1);
            const auto cls = static_cast<TissueClass>(scene.class_map[static_cast<std::size_t>(yi) * width + xi]);
            if (cls == TissueClass::stroma) continue;
            const Morph m = cls == TissueClass::benign ? benign_morph() : tumor_morph(t);
            Gland g = draw_gland(m, cfg.patch_size, rng);
            g.cx = cx;
            g.cy = cy;
            glands.push_back(g);
        }

    const FiberField fiber = FiberField::draw(cfg.patch_size, 0.35f, rng);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const float fx = x + 0.5f, fy = y + 0.5f;
            const float f = fiber.at(fx, fy);
            const RegionHit hit = classify(fx, fy, glands);
            Rgb c = mix(kStromaPink, kStromaMauve, f);
            if (hit.region == kWall) {
                const float tint = glands[hit.owner].tint;
                c = {kWallColorA.r + tint, kWallColorA.g + tint, kWallColorA.b + tint};
            } else if (hit.region == kLumen) {
                c = kLumenColorA;
            }
            put(scene.image, y, x, c);
        }
    for (const Gland& g : glands) draw_gland_nuclei(scene.image, g, rng);
    add_noise(scene.image, cfg.noise, rng);
    return scene;
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

Dataset Dataset::load(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("dataset: cannot open manifest " + manifest_path.string());
    Dataset ds;
    ds.root_ = manifest_path.parent_path();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("dataset: malformed manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        ManifestRecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.class_label = tissue_class_from_string(j.at("class").get<std::string>());
        rec.path_a = j.at("path_a").get<std::string>();
        rec.path_b = j.at("path_b").get<std::string>();
        ds.records_.push_back(std::move(rec));
    }
    ds.cache_a_.resize(ds.records_.size());
    ds.cache_b_.resize(ds.records_.size());
    return ds;
}

const ImageU8& Dataset::image_u8(std::size_t i, bool domain_b) const {
    auto& cache = domain_b ? cache_b_ : cache_a_;
    std::lock_guard<std::mutex> lock(*cache_mutex_);
    if (!cache[i]) {
        const ManifestRecord& rec = records_.at(i);
        const auto path = root_ / (domain_b ? rec.path_b : rec.path_a);
        try {
            cache[i] = read_png(path);
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset: cannot load image for id '" + rec.id + "': " + e.what());
        }
    }
    return *cache[i];
}

int Dataset::patch_size() const {
    if (records_.empty()) throw std::runtime_error("dataset: empty dataset has no patch size");
    return image_u8(0, false).height;
}

PatchPair Dataset::load_pair(std::size_t i) const {
    const ManifestRecord& rec = records_.at(i);
    const ImageU8& a = image_u8(i, false);
    const ImageU8& b = image_u8(i, true);
    if (a.height != b.height || a.width != b.width)
        throw std::runtime_error("dataset: domain shapes differ for id '" + rec.id + "'");
    PatchPair pair;
    pair.id = rec.id;
    pair.class_label = rec.class_label;
    pair.image_a = to_float(a);
    pair.image_b = to_float(b);
    return pair;
}

Dataset::Batch Dataset::make_batch(std::span<const std::size_t> indices, bool need_b) const {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
    const int s = patch_size();
    const int n = static_cast<int>(indices.size());
    Batch batch;
    batch.a = Tensor<float>({n, 3, s, s});
    if (need_b) batch.b = Tensor<float>({n, 3, s, s});
    for (int bi = 0; bi < n; ++bi) {
        const ImageU8& a = image_u8(indices[bi], false);
        if (a.height != s || a.width != s)
            throw std::runtime_error("dataset: inconsistent patch size for id '" + records_[indices[bi]].id + "'");
        const std::size_t plane = static_cast<std::size_t>(s) * s;
        for (int c = 0; c < 3; ++c) {
            float* dst = batch.a.data.data() + (static_cast<std::size_t>(bi) * 3 + c) * plane;
            for (std::size_t px = 0; px < plane; ++px) dst[px] = a.rgb[px * 3 + c] / 255.f;
        }
        if (need_b) {
            const ImageU8& b = image_u8(indices[bi], true);
            if (b.height != s || b.width != s)
                throw std::runtime_error("dataset: inconsistent patch size for id '" + records_[indices[bi]].id + "'");
            for (int c = 0; c < 3; ++c) {
                float* dst = batch.b.data.data() + (static_cast<std::size_t>(bi) * 3 + c) * plane;
                for (std::size_t px = 0; px < plane; ++px) dst[px] = b.rgb[px * 3 + c] / 255.f;
            }
        }
    }
    return batch;
}

std::vector<std::size_t> Dataset::indices_of(TissueClass c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (records_[i].class_label == c) out.push_back(i);
    return out;
}

WeightedSampler::WeightedSampler(const Dataset& dataset, std::array<double, 3> class_weights, int batch_size,
                                 std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw std::invalid_argument("WeightedSampler: batch_size must be >= 1");
    double total = 0;
    for (double w : class_weights) {
        if (w < 0) throw std::invalid_argument("WeightedSampler: weights must be >= 0");
        total += w;
    }
    if (total <= 0) throw std::invalid_argument("WeightedSampler: weights must not all be zero");
    for (int c = 0; c < 3; ++c) {
        by_class_[c] = dataset.indices_of(static_cast<TissueClass>(c));
        if (class_weights[c] > 0 && by_class_[c].empty())
            throw std::invalid_argument("WeightedSampler: class '" +
                                        std::string(to_string(static_cast<TissueClass>(c))) +
                                        "' has positive weight but no patches");
    }
    double acc = 0;
    for (int c = 0; c < 3; ++c) {
        acc += class_weights[c] / total;
        cumulative_[c] = acc;
    }
    cumulative_[2] = 1.0;
}

std::vector<std::size_t> WeightedSampler::sample(std::uint64_t step) const {
    Rng rng = derive_rng(seed_, "batch", step);
    std::vector<std::size_t> out(batch_size_);
    for (int i = 0; i < batch_size_; ++i) {
        const double u = rng.uniform();
        int c = 0;
        while (c < 2 && u >= cumulative_[c]) ++c;
        const auto& pool = by_class_[c];
        out[i] = pool[rng.uniform_int(static_cast<int>(pool.size()))];
    }
    return out;
}

ImageU8 to_u8(const Tensor<float>& hwc) {
    if (hwc.rank() != 3 || hwc.shape[2] != 3)
        throw std::invalid_argument("to_u8: image must be HxWx3, got " + shape_str(hwc.shape));
    ImageU8 img;
    img.height = hwc.shape[0];
    img.width = hwc.shape[1];
    img.rgb.resize(hwc.size());
    for (std::size_t i = 0; i < hwc.size(); ++i) {
        const float v = std::clamp(hwc.data[i], 0.f, 1.f);
        img.rgb[i] = static_cast<std::uint8_t>(v * 255.f + 0.5f);
    }
    return img;
}

Tensor<float> to_float(const ImageU8& image) {
    Tensor<float> t({image.height, image.width, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = image.rgb[i] / 255.f;
    return t;
}

}  // namespace caae
