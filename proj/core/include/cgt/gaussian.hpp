#pragma once

#include <torch/torch.h>

namespace cgt {

// Per-token, per-channel Gaussian parameters, channels-last [B, h, w, C] in
// the entropy model and [B, C, h, w] in the frame codec.
struct GaussianParams {
    torch::Tensor mu;
    torch::Tensor sigma;
};

// sigma_min + softplus(raw)
torch::Tensor positive_scale(const torch::Tensor& raw);

// Probability of the unit-width bin centred on each integer `value` under
// N(mu, sigma^2), floored at 1e-9.
torch::Tensor gaussian_likelihood(const torch::Tensor& value, const torch::Tensor& mu,
                                  const torch::Tensor& sigma);

// -log2 of gaussian_likelihood.
torch::Tensor gaussian_bits(const torch::Tensor& value, const torch::Tensor& mu,
                            const torch::Tensor& sigma);

}  // namespace cgt
