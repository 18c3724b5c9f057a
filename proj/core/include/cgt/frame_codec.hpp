#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "cgt/coder.hpp"
#include "cgt/gaussian.hpp"

namespace cgt {

struct CodecConfig {
    int64_t latent_channels = 32;
    int64_t hidden_channels = 64;
    int64_t hyper_channels = 16;
    int64_t hyper_feature_channels = 32;
    int64_t temporal_feature_channels = 32;

    static constexpr int64_t kDownsampling = 4;
    static constexpr int64_t kHyperDownsampling = 2;
};

// Round half to even.
torch::Tensor round_half_even(const torch::Tensor& x);

// Forward: round half to even, clamped to the escape-codable range with a
// logged warning. Backward: identity.
torch::Tensor quantize_ste(const torch::Tensor& y);

// Learned per-channel monotone CDF for the hyper-latent: a small positive
// weight network per channel followed by a sigmoid.
class FactorizedPriorImpl : public torch::nn::Module {
public:
    explicit FactorizedPriorImpl(int64_t channels);

    // CDF logits at x, [B, C, ...] -> same shape.
    torch::Tensor logits(const torch::Tensor& x);
    // Bin probability of each integer symbol, floored at 1e-9.
    torch::Tensor likelihood(const torch::Tensor& z_hat);
    // One pmf (escape, support, escape) per channel; each sums to one.
    std::vector<std::vector<double>> channel_pmfs(SymbolSupport support = {});
    std::vector<SymbolPMF> channel_tables(SymbolSupport support = {});

    int64_t channels() const { return channels_; }

private:
    int64_t channels_;
    std::vector<torch::Tensor> matrices_;
    std::vector<torch::Tensor> biases_;
    std::vector<torch::Tensor> factors_;
};
TORCH_MODULE(FactorizedPrior);

// Convolutional contextual frame codec. Frames are [B, 3, H, W] in [0, 1];
// latents [B, C, H/4, W/4]; temporal features are derived from the previous
// quantized latent and shared by encoder and decoder.
class FrameCodecImpl : public torch::nn::Module {
public:
    explicit FrameCodecImpl(const CodecConfig& config = {});

    torch::Tensor encode(const torch::Tensor& frame, const torch::Tensor& temporal_features);
    torch::Tensor decode(const torch::Tensor& latent_q, const torch::Tensor& temporal_features);

    torch::Tensor hyper_encode(const torch::Tensor& latent);
    // Hyper features upsampled and cropped to the (h, w) latent grid.
    torch::Tensor hyper_decode(const torch::Tensor& hyper_q, int64_t h, int64_t w);

    torch::Tensor temporal_prior(const torch::Tensor& previous_latent_q);

    // Mean-scale prior from hyper and temporal features only. Used to train
    // the codec before the transformer entropy model exists.
    GaussianParams prior_params(const torch::Tensor& hyper_features,
                                const torch::Tensor& temporal_features);

    FactorizedPrior& hyper_prior() { return hyper_prior_; }
    const CodecConfig& config() const { return config_; }

private:
    CodecConfig config_;
    torch::nn::Conv2d enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr}, enc4_{nullptr};
    torch::nn::Conv2d dec1_{nullptr}, dec2_{nullptr};
    torch::nn::ConvTranspose2d up1_{nullptr}, up2_{nullptr};
    torch::nn::Conv2d henc1_{nullptr}, henc2_{nullptr};
    torch::nn::ConvTranspose2d hdec1_{nullptr};
    torch::nn::Conv2d hdec2_{nullptr};
    torch::nn::Conv2d tp1_{nullptr}, tp2_{nullptr};
    torch::nn::Conv2d prior_head_{nullptr};
    FactorizedPrior hyper_prior_{nullptr};
};
TORCH_MODULE(FrameCodec);

}  // namespace cgt
