#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cgt/model.hpp"

namespace cgt {

struct TrainConfig {
    double lambda = 1024.0;
    int64_t stage = 1;
    int64_t steps = 1000;          // optimizer iterations
    int64_t batch_size = 4;
    double alpha = 0.5;
    int64_t decode_steps = 8;      // schedule the selection k is drawn from
    double learning_rate = 1e-4;
    uint64_t seed = 0;
    double temperature = 0.5;
    double clip_norm = 1.0;
    int64_t clip_frames = 3;       // frames per training clip (1 I + P frames)
    int64_t clip_pool = 0;         // distinct synthetic clips cycled through; 0 = fresh every step
    int64_t frame_size = 64;
    double min_mask_ratio = 0.5;
    int64_t log_every = 50;
    ContextPath context_path = ContextPath::Resampler;

    // Validates ranges; throws ConfigError.
    void validate() const;
};

// Overrides cfg fields from a JSON object whose keys are the field names
// (context_path as "tcr" or "full"). Unknown keys are errors.
void load_train_config(const std::filesystem::path& path, TrainConfig& cfg);

// Bits are per frame, averaged over the batch; distortion is MSE on [0, 1].
struct LossBreakdown {
    double rate_y = 0.0;
    double rate_z = 0.0;
    double distortion = 0.0;
    double total = 0.0;  // rate_y + rate_z + lambda * 255^2 * distortion
    torch::Tensor loss;  // differentiable total
};

double distortion_weight(double lambda);

// Clips are [B, T, 3, H, W] in [0, 1]; frame 0 of each clip is an I-frame.
// Stage 1: codec and hyperprior with the codec's own mean-scale prior.
LossBreakdown codec_loss(CgtModel& model, const torch::Tensor& clips, double lambda);

// One latent frame of a clip with its conditioning, codec output fixed.
struct LatentSample {
    torch::Tensor latent;    // [C, h, w] quantized
    torch::Tensor previous;  // [C, h, w] quantized, zeros for I-frames
    torch::Tensor hyper;     // [hp, h, w] hyperprior features
    torch::Tensor temporal;  // [tp, h, w]
    double rate_z = 0.0;
    double distortion = 0.0;
};

std::vector<LatentSample> precompute_latents(CgtModel& model, const torch::Tensor& clips);

struct MaskingOptions {
    double alpha = 0.5;
    double temperature = 0.5;
    int64_t decode_steps = 8;
    double min_mask_ratio = 0.5;
};

// Masked teacher/student rate of a batch of latents (all tensors batched,
// channels first). A random mask is drawn per entry, the teacher unmasks k
// positions (k drawn from the schedule) and the rate over the initially
// masked set charges newly revealed positions the teacher's bits and the
// rest the student's bits. The selection reaches the loss only through the
// student's input. Returns bits summed per entry, [B].
torch::Tensor masked_rate(CgtModel& model, const torch::Tensor& latent, const torch::Tensor& previous,
                          const torch::Tensor& hyper, const torch::Tensor& temporal,
                          const MaskingOptions& options, std::mt19937_64& rng,
                          const std::optional<double>& mask_ratio = std::nullopt);

// Stage 2: entropy model only, on precomputed latents.
LossBreakdown entropy_loss(CgtModel& model, const std::vector<const LatentSample*>& batch,
                           double lambda, const MaskingOptions& options, std::mt19937_64& rng);

// Stage 3: everything, rates from the entropy model.
LossBreakdown joint_loss(CgtModel& model, const torch::Tensor& clips, double lambda,
                         const MaskingOptions& options, std::mt19937_64& rng);

// Parameters trained in each stage.
std::vector<torch::Tensor> stage_parameters(CgtModel& model, int64_t stage);

struct TrainProgress {
    int64_t step = 0;
    LossBreakdown loss;
};

struct TrainResult {
    std::vector<double> totals;  // per step
    LossBreakdown last;
};

// Runs cfg.steps optimizer iterations of cfg.stage on synthetic clips.
// Stage 2 keeps codec parameters untouched. Each logged step appends a
// JSON line to `log_path` when set.
TrainResult train_stage(CgtModel& model, const TrainConfig& cfg,
                        const std::filesystem::path& log_path = {},
                        const std::function<void(const TrainProgress&)>& on_step = {});

// Synthetic training clips [count, frames, 3, size, size] from consecutive seeds.
torch::Tensor synthetic_batch(uint64_t first_seed, int64_t count, int64_t frames, int64_t size);

}  // namespace cgt
