#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "caae/model.hpp"
#include "caae/optimizer.hpp"
#include "caae/synthdata.hpp"

namespace caae {

enum class ReconMode { A2A, A2B };

std::string_view to_string(ReconMode m);
ReconMode recon_mode_from_string(std::string_view s);

struct TrainConfig {
    ReconMode mode = ReconMode::A2B;
    int batch_size = 32;
    int steps = 20000;
    float lr_recon = 1e-4f;  // stage 1, encoder + decoder
    float lr_disc = 2e-4f;   // stage 2, both discriminators
    float lr_adv = 1e-4f;    // stage 3, encoder only
    float adv_weight = 0.1f;
    std::uint64_t seed = 1;
    int checkpoint_every = 2000;
    std::array<double, 3> class_weights = {0.2, 0.4, 0.4};  // epithelium-biased sampling

    void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct StepReport {
    std::int64_t step = 0;
    float recon = 0;
    float disc_y = 0;
    float disc_z = 0;
    float adv = 0;

    bool all_finite() const;
};

// Five Adam states: the encoder keeps separate moments for the
// reconstruction and adversarial objectives.
struct OptStates {
    AdamState<float> recon_enc, recon_dec, disc_y, disc_z, adv_enc;
};

// Hashes of the four parameter collections, recorded by train_step after
// each stage; lets tests pin the three-stage update schedule.
struct StageTrace {
    struct Snapshot {
        std::uint64_t encoder, decoder, disc_y, disc_z;
    };
    std::array<Snapshot, 3> after_stage;
};

struct TrainBatch {
    Tensor<float> a;  // N x C x H x W, encoder input
    Tensor<float> b;  // registered domain-B target; may be empty in A2A runs
};

// Selects the reconstruction target: the input itself (A2A) or the
// registered domain-B image (A2B).
const Tensor<float>& reconstruction_target(const TrainBatch& batch, ReconMode mode);

// One minibatch update in three stages:
//   1. encoder+decoder step on the reconstruction loss,
//   2. one step each on disc_y and disc_z (prior samples labeled 1,
//      encoder outputs labeled 0; encoder outputs enter as constants),
//   3. encoder-only step on the weighted non-saturating generator loss,
//      discriminator weights frozen.
// A non-finite loss or gradient aborts with the parameters restored to
// their pre-step values.
StepReport train_step(CAAEParams& params, OptStates& opts, const TrainBatch& batch, const ModelConfig& model_cfg,
                      const TrainConfig& train_cfg, std::int64_t step, StageTrace* trace = nullptr);

// ---- checkpoints ----
// Layout: magic "CAAE", format version u32, u64 header length, JSON header
// (configs, step, named shapes, payload crc32), then the tensor payload as
// little-endian float32 arrays in header order.

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    std::int64_t step = 0;
    CAAEParams params;
    OptStates opts;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// `expect` guards against loading into a mismatched architecture.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expect = nullptr);

// ---- the training loop ----

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::vector<StepReport> log;  // reports for the steps run in this call
};

using StepObserver = std::function<void(const StepReport&)>;

// Runs `cfg.steps` three-stage updates with seed-deterministic weighted
// batches, appending `losses.csv` and periodic ckpt_<step>.caae files under
// run_dir. `resume_from` continues a run mid-stream: batches depend only on
// (seed, step), so the remaining steps replay exactly.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Dataset& dataset,
                  const std::filesystem::path& run_dir,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt,
                  const StepObserver& observer = {});

}  // namespace caae
