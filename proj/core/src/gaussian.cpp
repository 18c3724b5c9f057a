#include "cgt/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "cgt/coder.hpp"

namespace cgt {

namespace {

torch::Tensor standard_cdf(const torch::Tensor& x) {
    return 0.5 * torch::erfc(x * (-1.0 / std::numbers::sqrt2));
}

}  // namespace

torch::Tensor positive_scale(const torch::Tensor& raw) {
    return torch::nn::functional::softplus(raw) + kSigmaMin;
}

torch::Tensor gaussian_likelihood(const torch::Tensor& value, const torch::Tensor& mu,
                                  const torch::Tensor& sigma) {
    // Evaluate on the lower tail side for accuracy.
    auto centred = torch::abs(value - mu);
    auto upper = standard_cdf((0.5 - centred) / sigma);
    auto lower = standard_cdf((-0.5 - centred) / sigma);
    return torch::clamp_min(upper - lower, 1e-9);
}

torch::Tensor gaussian_bits(const torch::Tensor& value, const torch::Tensor& mu,
                            const torch::Tensor& sigma) {
    return -torch::log2(gaussian_likelihood(value, mu, sigma));
}

}  // namespace cgt
