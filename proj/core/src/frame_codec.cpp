#include "cgt/frame_codec.hpp"

#include <cmath>
#include <string>

#include "cgt/errors.hpp"
#include "cgt/log.hpp"

namespace cgt {

namespace F = torch::nn::functional;

namespace {

torch::Tensor act(const torch::Tensor& x) {
    return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.1));
}

torch::nn::Conv2dOptions conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1) {
    return torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2);
}

torch::nn::ConvTranspose2dOptions upconv(int64_t in, int64_t out, int64_t k) {
    return torch::nn::ConvTranspose2dOptions(in, out, k).stride(2).padding(k / 2).output_padding(1);
}

void expect_grid(const torch::Tensor& t, int64_t h, int64_t w, const char* what) {
    if (t.dim() != 4 || t.size(2) != h || t.size(3) != w) {
        throw DimensionError(std::string(what) + " must be [B, C, " + std::to_string(h) + ", " +
                             std::to_string(w) + "], got " + std::to_string(t.dim()) +
                             "-d tensor " + (t.dim() == 4 ? std::to_string(t.size(2)) + "x" +
                                                                std::to_string(t.size(3))
                                                          : std::string{}));
    }
}

}  // namespace

torch::Tensor round_half_even(const torch::Tensor& x) { return torch::round(x); }

torch::Tensor quantize_ste(const torch::Tensor& y) {
    const double limit = static_cast<double>(kMaxCodableMagnitude);
    auto rounded = round_half_even(y.detach());
    if (rounded.abs().gt(limit).any().item<bool>()) {
        log::warn("latent values beyond +/-" + std::to_string(kMaxCodableMagnitude) +
                  " clamped before coding");
        rounded = rounded.clamp(-limit, limit);
    }
    return y + (rounded - y).detach();
}

FactorizedPriorImpl::FactorizedPriorImpl(int64_t channels) : channels_(channels) {
    const std::vector<int64_t> filters{1, 3, 3, 1};
    const double init_scale = 10.0;
    const double scale = std::pow(init_scale, 1.0 / static_cast<double>(filters.size() - 1));
    for (std::size_t i = 0; i + 1 < filters.size(); ++i) {
        const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(filters[i + 1])));
        matrices_.push_back(register_parameter(
            "matrix" + std::to_string(i), torch::full({channels, filters[i + 1], filters[i]}, init)));
        biases_.push_back(register_parameter(
            "bias" + std::to_string(i), torch::rand({channels, filters[i + 1], 1}) - 0.5));
        if (i + 2 < filters.size()) {
            factors_.push_back(register_parameter("factor" + std::to_string(i),
                                                  torch::zeros({channels, filters[i + 1], 1})));
        }
    }
}

torch::Tensor FactorizedPriorImpl::logits(const torch::Tensor& x) {
    if (x.size(1) != channels_) {
        throw DimensionError("factorized prior expects " + std::to_string(channels_) + " channels");
    }
    const auto shape = x.sizes().vec();
    // [B, C, ...] -> [C, 1, N]
    auto h = x.transpose(0, 1).reshape({channels_, 1, -1});
    for (std::size_t i = 0; i < matrices_.size(); ++i) {
        h = torch::matmul(F::softplus(matrices_[i]), h) + biases_[i];
        if (i < factors_.size()) {
            h = h + torch::tanh(factors_[i]) * torch::tanh(h);
        }
    }
    auto moved = shape;
    std::swap(moved[0], moved[1]);
    return h.reshape(moved).transpose(0, 1);
}

torch::Tensor FactorizedPriorImpl::likelihood(const torch::Tensor& z_hat) {
    auto lower = logits(z_hat - 0.5);
    auto upper = logits(z_hat + 0.5);
    // Flip to the side where both sigmoids are small.
    auto sign = -torch::sign(lower + upper).detach();
    auto p = torch::abs(torch::sigmoid(sign * upper) - torch::sigmoid(sign * lower));
    return torch::clamp_min(p, 1e-9);
}

std::vector<std::vector<double>> FactorizedPriorImpl::channel_pmfs(SymbolSupport support) {
    torch::NoGradGuard guard;
    const int64_t edges = support.size() + 1;
    auto x = (torch::arange(edges, torch::kFloat) + (static_cast<double>(support.min) - 0.5))
                 .view({1, 1, edges})
                 .expand({1, channels_, edges});
    auto l = logits(x).to(torch::kDouble).contiguous();  // [1, C, edges]
    auto acc = l.accessor<double, 3>();

    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<std::vector<double>> pmfs(static_cast<std::size_t>(channels_));
    for (int64_t c = 0; c < channels_; ++c) {
        auto& pmf = pmfs[static_cast<std::size_t>(c)];
        pmf.resize(support.entries());
        pmf.front() = sigmoid(acc[0][c][0]);
        for (int64_t j = 0; j + 1 < edges; ++j) {
            const double lo = acc[0][c][j];
            const double hi = acc[0][c][j + 1];
            const double p = lo + hi > 0.0 ? sigmoid(-lo) - sigmoid(-hi) : sigmoid(hi) - sigmoid(lo);
            pmf[static_cast<std::size_t>(j + 1)] = std::max(p, 0.0);
        }
        pmf.back() = sigmoid(-acc[0][c][edges - 1]);
        double mass = 0.0;
        for (double p : pmf) mass += p;
        for (double& p : pmf) p /= mass;
    }
    return pmfs;
}

std::vector<SymbolPMF> FactorizedPriorImpl::channel_tables(SymbolSupport support) {
    std::vector<SymbolPMF> tables;
    for (const auto& pmf : channel_pmfs(support)) {
        tables.push_back(quantize_cdf(pmf));
    }
    return tables;
}

FrameCodecImpl::FrameCodecImpl(const CodecConfig& config) : config_(config) {
    const int64_t n = config.hidden_channels;
    const int64_t c = config.latent_channels;
    const int64_t tp = config.temporal_feature_channels;
    enc1_ = register_module("enc1", torch::nn::Conv2d(conv(3, n, 5, 2)));
    enc2_ = register_module("enc2", torch::nn::Conv2d(conv(n, n, 5, 2)));
    enc3_ = register_module("enc3", torch::nn::Conv2d(conv(n + tp, n, 3)));
    enc4_ = register_module("enc4", torch::nn::Conv2d(conv(n, c, 3)));

    dec1_ = register_module("dec1", torch::nn::Conv2d(conv(c + tp, n, 3)));
    dec2_ = register_module("dec2", torch::nn::Conv2d(conv(n, n, 3)));
    up1_ = register_module("up1", torch::nn::ConvTranspose2d(upconv(n, n, 5)));
    up2_ = register_module("up2", torch::nn::ConvTranspose2d(upconv(n, 3, 5)));

    henc1_ = register_module("henc1", torch::nn::Conv2d(conv(c, n, 3)));
    henc2_ = register_module("henc2", torch::nn::Conv2d(conv(n, config.hyper_channels, 3, 2)));
    hdec1_ = register_module("hdec1", torch::nn::ConvTranspose2d(upconv(config.hyper_channels, n, 3)));
    hdec2_ = register_module("hdec2", torch::nn::Conv2d(conv(n, config.hyper_feature_channels, 3)));

    // Replicate padding keeps spatially constant inputs constant.
    tp1_ = register_module("tp1", torch::nn::Conv2d(conv(c, n, 3).padding_mode(torch::kReplicate)));
    tp2_ = register_module("tp2", torch::nn::Conv2d(conv(n, tp, 3).padding_mode(torch::kReplicate)));

    prior_head_ = register_module(
        "prior_head", torch::nn::Conv2d(conv(config.hyper_feature_channels + tp, 2 * c, 1)));
    hyper_prior_ = register_module("hyper_prior", FactorizedPrior(config.hyper_channels));
}

torch::Tensor FrameCodecImpl::encode(const torch::Tensor& frame, const torch::Tensor& temporal_features) {
    if (frame.dim() != 4 || frame.size(1) != 3) {
        throw DimensionError("frame must be [B, 3, H, W]");
    }
    const int64_t s = CodecConfig::kDownsampling;
    if (frame.size(2) % s != 0 || frame.size(3) % s != 0) {
        throw DimensionError("frame extent must be a multiple of " + std::to_string(s));
    }
    expect_grid(temporal_features, frame.size(2) / s, frame.size(3) / s, "temporal features");
    auto x = act(enc1_(frame));
    x = act(enc2_(x));
    x = act(enc3_(torch::cat({x, temporal_features}, 1)));
    return enc4_(x);
}

torch::Tensor FrameCodecImpl::decode(const torch::Tensor& latent_q, const torch::Tensor& temporal_features) {
    if (latent_q.dim() != 4 || latent_q.size(1) != config_.latent_channels) {
        throw DimensionError("latent must be [B, " + std::to_string(config_.latent_channels) +
                             ", h, w]");
    }
    expect_grid(temporal_features, latent_q.size(2), latent_q.size(3), "temporal features");
    auto x = act(dec1_(torch::cat({latent_q, temporal_features}, 1)));
    x = act(dec2_(x));
    x = act(up1_(x));
    return up2_(x);
}

torch::Tensor FrameCodecImpl::hyper_encode(const torch::Tensor& latent) {
    return henc2_(act(henc1_(latent)));
}

torch::Tensor FrameCodecImpl::hyper_decode(const torch::Tensor& hyper_q, int64_t h, int64_t w) {
    auto x = hdec2_(act(hdec1_(hyper_q)));
    if (x.size(2) < h || x.size(3) < w) {
        throw DimensionError("hyper-latent too small for the latent grid");
    }
    return x.narrow(2, 0, h).narrow(3, 0, w);
}

torch::Tensor FrameCodecImpl::temporal_prior(const torch::Tensor& previous_latent_q) {
    return tp2_(act(tp1_(previous_latent_q)));
}

GaussianParams FrameCodecImpl::prior_params(const torch::Tensor& hyper_features,
                                            const torch::Tensor& temporal_features) {
    auto raw = prior_head_(torch::cat({hyper_features, temporal_features}, 1));
    auto parts = raw.chunk(2, 1);
    return {parts[0], positive_scale(parts[1])};
}

}  // namespace cgt
