#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "cgt/metrics.hpp"
#include "cgt/model.hpp"
#include "cgt/pipeline.hpp"

namespace cgt {

using Clip = std::vector<torch::Tensor>;  // frames [3, H, W] in [0, 1]

// Synthetic evaluation clips for seeds [first_seed, first_seed + count).
std::vector<Clip> synthetic_clips(uint64_t first_seed, int64_t count, int64_t frames, int64_t size = 64);

struct ClipStats {
    double bits = 0.0;          // serialized stream
    double pixels = 0.0;
    double squared_error = 0.0;  // summed over all pixels and channels
    std::vector<torch::Tensor> latents;
};

ClipStats code_clip(CgtModel& model, const Clip& clip, const CodingOptions& options, uint32_t lambda_index);

// Pooled bpp and PSNR over clips (PSNR of the pooled MSE).
RDPoint rd_point(CgtModel& model, const std::vector<Clip>& clips, const CodingOptions& options,
                 uint32_t lambda_index);

struct OrderingResult {
    Ordering ordering = Ordering::DependencyWeighted;
    double bpp = 0.0;
    double psnr = 0.0;
};

struct OrderingReport {
    std::vector<OrderingResult> results;  // dependency, random, checkerboard
    // The orderings only move bits around: every ordering must code the
    // same quantized latents.
    bool identical_latents = true;

    double bpp(Ordering ordering) const;
};

OrderingReport ordering_ablation(CgtModel& model, const std::vector<Clip>& clips,
                                 const CodingOptions& options, uint32_t lambda_index);

struct AlphaResult {
    double alpha = 0.0;
    RDPoint point;
};

std::vector<AlphaResult> alpha_sweep(CgtModel& model, const std::vector<Clip>& clips,
                                     const std::vector<double>& alphas, const CodingOptions& options,
                                     uint32_t lambda_index);

struct TimingResult {
    double median_ms = 0.0;
    std::vector<double> samples_ms;
};

// Wall time of one entropy-model forward (context fusion plus one decoder
// pass) on a single 64x64 frame, single-threaded, after `warmup` runs.
TimingResult time_entropy_forward(CgtModel& model, int64_t iterations = 30, int64_t warmup = 5);

}  // namespace cgt
