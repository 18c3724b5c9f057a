#include "cgt/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "cgt/errors.hpp"
#include "cgt/frame_codec.hpp"
#include "cgt/synthetic.hpp"

namespace cgt {

std::vector<Clip> synthetic_clips(uint64_t first_seed, int64_t count, int64_t frames, int64_t size) {
    std::vector<Clip> clips;
    for (int64_t i = 0; i < count; ++i) {
        SyntheticClipSpec spec;
        spec.seed = first_seed + static_cast<uint64_t>(i);
        spec.frames = frames;
        spec.size = size;
        auto video = render_clip(spec);
        Clip clip;
        for (int64_t t = 0; t < frames; ++t) clip.push_back(video[t]);
        clips.push_back(std::move(clip));
    }
    return clips;
}

ClipStats code_clip(CgtModel& model, const Clip& clip, const CodingOptions& options, uint32_t lambda_index) {
    auto encoded = encode_video(model, clip, options, lambda_index);
    ClipStats stats;
    stats.bits = 8.0 * static_cast<double>(encoded.stream.byte_size());
    for (std::size_t t = 0; t < clip.size(); ++t) {
        const auto& rec = encoded.frames[t].reconstruction;
        stats.pixels += static_cast<double>(clip[t].size(1) * clip[t].size(2));
        stats.squared_error += (rec.to(torch::kDouble) - clip[t].to(torch::kDouble)).pow(2).sum().item<double>();
        stats.latents.push_back(encoded.frames[t].latent);
    }
    return stats;
}

RDPoint rd_point(CgtModel& model, const std::vector<Clip>& clips, const CodingOptions& options,
                 uint32_t lambda_index) {
    if (clips.empty()) throw ConfigError("no clips to evaluate");
    double bits = 0.0, pixels = 0.0, se = 0.0;
    for (const auto& clip : clips) {
        const auto s = code_clip(model, clip, options, lambda_index);
        bits += s.bits;
        pixels += s.pixels;
        se += s.squared_error;
    }
    const double mse = se / (3.0 * pixels);
    return {bits / pixels, mse == 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse)};
}

double OrderingReport::bpp(Ordering ordering) const {
    for (const auto& r : results) {
        if (r.ordering == ordering) return r.bpp;
    }
    throw ConfigError("ordering " + to_string(ordering) + " not in report");
}

OrderingReport ordering_ablation(CgtModel& model, const std::vector<Clip>& clips,
                                 const CodingOptions& options, uint32_t lambda_index) {
    OrderingReport report;
    std::vector<std::vector<torch::Tensor>> reference;
    for (auto ordering : {Ordering::DependencyWeighted, Ordering::Random, Ordering::Checkerboard}) {
        CodingOptions o = options;
        o.ordering = ordering;
        double bits = 0.0, pixels = 0.0, se = 0.0;
        for (std::size_t i = 0; i < clips.size(); ++i) {
            auto s = code_clip(model, clips[i], o, lambda_index);
            bits += s.bits;
            pixels += s.pixels;
            se += s.squared_error;
            if (reference.size() <= i) {
                reference.push_back(std::move(s.latents));
                continue;
            }
            for (std::size_t t = 0; t < s.latents.size(); ++t) {
                if (!torch::equal(s.latents[t], reference[i][t])) report.identical_latents = false;
            }
        }
        const double mse = se / (3.0 * pixels);
        report.results.push_back({ordering, bits / pixels, -10.0 * std::log10(std::max(mse, 1e-20))});
    }
    return report;
}

std::vector<AlphaResult> alpha_sweep(CgtModel& model, const std::vector<Clip>& clips,
                                     const std::vector<double>& alphas, const CodingOptions& options,
                                     uint32_t lambda_index) {
    std::vector<AlphaResult> out;
    for (double alpha : alphas) {
        CodingOptions o = options;
        o.alpha = alpha;
        o.ordering = Ordering::DependencyWeighted;
        out.push_back({alpha, rd_point(model, clips, o, lambda_index)});
    }
    return out;
}

TimingResult time_entropy_forward(CgtModel& model, int64_t iterations, int64_t warmup) {
    if (iterations < 1) throw ConfigError("timing needs at least one iteration");
    torch::NoGradGuard no_grad;
    model->eval();
    const int threads = torch::get_num_threads();
    torch::set_num_threads(1);
    const auto& cfg = model->config().codec;
    const int64_t h = 64 / CodecConfig::kDownsampling;
    const int64_t w = h;
    torch::manual_seed(0);
    auto previous = torch::round(torch::randn({1, cfg.latent_channels, h, w}) * 3);
    auto hyper = torch::randn({1, cfg.hyper_feature_channels, h, w});
    auto temporal = torch::randn({1, cfg.temporal_feature_channels, h, w});
    auto latent = torch::round(torch::randn({1, cfg.latent_channels, h, w}) * 3);
    auto reveal = (torch::rand({1, h, w}) < 0.5).to(torch::kFloat);

    auto& entropy = model->entropy();
    auto run = [&] {
        auto fused = entropy->fuse(previous, hyper, temporal);
        return entropy->predict(latent, reveal, fused).params.mu.sum().item<float>();
    };
    for (int64_t i = 0; i < warmup; ++i) run();
    TimingResult result;
    for (int64_t i = 0; i < iterations; ++i) {
        const auto start = std::chrono::steady_clock::now();
        run();
        const auto stop = std::chrono::steady_clock::now();
        result.samples_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    auto sorted = result.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    result.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    torch::set_num_threads(threads);
    return result;
}

}  // namespace cgt
