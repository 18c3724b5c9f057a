#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "cgt/dwsca.hpp"
#include "cgt/frame_codec.hpp"
#include "cgt/tcr.hpp"

namespace cgt {

enum class ContextPath { Resampler, FullAttention };

std::string to_string(ContextPath path);
ContextPath parse_context_path(const std::string& name);

struct ModelConfig {
    CodecConfig codec;
    int64_t dim = 64;
    int64_t heads = 4;
    double mlp_ratio = 4.0;
    int64_t window_grid = 4;
    int64_t query_grid = 8;
    int64_t resampler_blocks = 1;
    int64_t fusion_blocks = 2;
    int64_t decoder_blocks = 4;
    ContextPath context_path = ContextPath::Resampler;
};

// Context path, fusion encoder and the shared masked decoder.
class CgtEntropyModelImpl : public torch::nn::Module {
public:
    explicit CgtEntropyModelImpl(const ModelConfig& config);

    // Channels-first context grids [B, ch, h, w] -> fused tokens
    // [B, 3, gh, gw, d]; gh = query_grid with the resampler, h without.
    torch::Tensor fuse(const torch::Tensor& previous_latent, const torch::Tensor& hyper_features,
                       const torch::Tensor& temporal_features);

    // latent [B, C, h, w] (channels first), reveal [B, h, w].
    DecoderOutput predict(const torch::Tensor& latent, const torch::Tensor& reveal,
                          const torch::Tensor& fused);

    SpatialDecoder& decoder() { return decoder_; }
    TemporalContextResampler& resampler() { return resampler_; }
    ContextFusion& fusion() { return fusion_; }
    const ModelConfig& config() const { return config_; }

private:
    ModelConfig config_;
    torch::nn::Linear previous_proj_{nullptr};
    torch::nn::Linear hyper_proj_{nullptr};
    torch::nn::Linear temporal_proj_{nullptr};
    TemporalContextResampler resampler_{nullptr};
    ContextFusion fusion_{nullptr};
    SpatialDecoder decoder_{nullptr};
};
TORCH_MODULE(CgtEntropyModel);

class CgtModelImpl : public torch::nn::Module {
public:
    explicit CgtModelImpl(const ModelConfig& config = {});

    FrameCodec& codec() { return codec_; }
    CgtEntropyModel& entropy() { return entropy_; }
    const ModelConfig& config() const { return config_; }

private:
    ModelConfig config_;
    FrameCodec codec_{nullptr};
    CgtEntropyModel entropy_{nullptr};
};
TORCH_MODULE(CgtModel);

inline constexpr int64_t kCheckpointFormatVersion = 1;

struct CheckpointInfo {
    ModelConfig config;
    double lambda = 1024.0;
    uint32_t lambda_index = 2;
    int64_t stage = 0;
    int64_t step = 0;
};

// Named tensors plus format version, architecture and training metadata.
void save_checkpoint(const std::filesystem::path& path, CgtModel& model, const CheckpointInfo& info);

struct LoadedCheckpoint {
    CgtModel model{nullptr};
    CheckpointInfo info;
};

// Throws FormatError for missing files, unknown versions or mismatched
// parameter sets.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Position of lambda in {256, 512, 1024, 2048}; ConfigError otherwise.
uint32_t lambda_index(double lambda);
double lambda_value(uint32_t index);

}  // namespace cgt
