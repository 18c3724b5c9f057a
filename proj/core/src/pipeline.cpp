#include "cgt/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "cgt/coder.hpp"
#include "cgt/errors.hpp"
#include "cgt/frame_codec.hpp"
#include "cgt/schedule.hpp"

namespace cgt {

namespace {

constexpr int64_t kRandomSeedStride = 7919;

// Codes the symbols of `positions` (position major, channel minor) and
// returns their values.
using StepCoder = std::function<std::vector<int32_t>(
    const std::vector<int64_t>& positions, const std::vector<SymbolPMF>& tables)>;

torch::Tensor quantize(const torch::Tensor& y) {
    const double limit = static_cast<double>(kMaxCodableMagnitude);
    return round_half_even(y).clamp(-limit, limit);
}

std::vector<SymbolPMF> position_tables(const torch::Tensor& mu, const torch::Tensor& sigma,
                                      const std::vector<int64_t>& positions, int64_t channels) {
    auto m = mu.accessor<float, 2>();
    auto s = sigma.accessor<float, 2>();
    std::vector<SymbolPMF> tables;
    tables.reserve(positions.size() * static_cast<std::size_t>(channels));
    for (int64_t p : positions) {
        for (int64_t c = 0; c < channels; ++c) {
            tables.push_back(quantize_cdf(discretized_gaussian_pmf(m[p][c], s[p][c])));
        }
    }
    return tables;
}

struct FrameContext {
    torch::Tensor temporal;  // y_tp
    torch::Tensor fused;
};

// Runs the selection loop of one frame. `latent` is [1, C, h, w] and holds
// only revealed symbols; it is filled in place.
void run_steps(CgtModel& model, const FrameContext& ctx, torch::Tensor& latent,
               const CodingOptions& options, uint64_t order_seed, FrameTrace& trace,
               const StepCoder& code) {
    const int64_t channels = latent.size(1);
    const int64_t h = latent.size(2);
    const int64_t w = latent.size(3);
    const int64_t n = h * w;
    const auto schedule = sinusoidal_schedule(n, options.steps);

    std::vector<std::vector<int64_t>> fixed;
    if (options.ordering == Ordering::Random) {
        fixed = random_order(h, w, options.steps, order_seed);
    } else if (options.ordering == Ordering::Checkerboard) {
        fixed = checkerboard_order(h, w, options.steps);
    }

    auto mask = torch::ones({1, h, w}, torch::kBool);
    auto values = latent.view({channels, n});
    for (int64_t step = 0; step < options.steps; ++step) {
        auto reveal = mask.logical_not().to(torch::kFloat);
        auto out = model->entropy()->predict(latent, reveal, ctx.fused);

        std::vector<int64_t> positions;
        if (options.ordering == Ordering::DependencyWeighted) {
            auto score = score_positions(out, mask, options.alpha).reshape({n});
            auto idx = mask.reshape({n}).nonzero().view({-1});
            auto row = score.index_select(0, idx).to(torch::kDouble).contiguous();
            const auto local = hard_topk(
                std::span<const double>(row.data_ptr<double>(), static_cast<std::size_t>(row.numel())),
                std::min<int64_t>(schedule.steps[static_cast<std::size_t>(step)], row.numel()));
            auto ia = idx.accessor<int64_t, 1>();
            for (int64_t j : local) positions.push_back(ia[j]);
        } else {
            positions = fixed[static_cast<std::size_t>(step)];
        }

        auto mu = out.params.mu.reshape({n, channels}).contiguous();
        auto sigma = out.params.sigma.reshape({n, channels}).contiguous();
        const auto tables = position_tables(mu, sigma, positions, channels);
        const auto symbols = code(positions, tables);

        auto acc = values.accessor<float, 2>();
        auto flat = mask.view({n});
        auto m = flat.accessor<bool, 1>();
        double bits = 0.0;
        for (std::size_t i = 0; i < positions.size(); ++i) {
            for (int64_t c = 0; c < channels; ++c) {
                const std::size_t s = i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c);
                acc[c][positions[i]] = static_cast<float>(symbols[s]);
                bits += symbol_code_length(symbols[s], tables[s]);
            }
            m[positions[i]] = false;
        }
        trace.order.push_back(positions);
        trace.segment_bits.push_back(bits);
    }
    if (mask.any().item<bool>()) {
        throw Error("decoding schedule left positions masked");
    }
}

uint64_t frame_order_seed(uint32_t seed, std::size_t frame) {
    return static_cast<uint64_t>(seed) + kRandomSeedStride * static_cast<uint64_t>(frame);
}

void check_frame(const torch::Tensor& frame, int64_t h, int64_t w) {
    if (frame.dim() != 3 || frame.size(0) != 3 || frame.size(1) != h || frame.size(2) != w) {
        throw DimensionError("all frames must be [3, " + std::to_string(h) + ", " +
                             std::to_string(w) + "]");
    }
}

}  // namespace

std::string to_string(Ordering ordering) {
    switch (ordering) {
        case Ordering::DependencyWeighted: return "dependency";
        case Ordering::Random: return "random";
        case Ordering::Checkerboard: return "checkerboard";
    }
    return "unknown";
}

Ordering parse_ordering(const std::string& name) {
    if (name == "dependency") return Ordering::DependencyWeighted;
    if (name == "random") return Ordering::Random;
    if (name == "checkerboard") return Ordering::Checkerboard;
    throw ConfigError("unknown ordering '" + name + "' (expected dependency, random or checkerboard)");
}

std::vector<std::vector<int64_t>> random_order(int64_t h, int64_t w, int64_t steps, uint64_t seed) {
    const auto schedule = sinusoidal_schedule(h * w, steps);
    std::vector<int64_t> perm(static_cast<std::size_t>(h * w));
    std::iota(perm.begin(), perm.end(), int64_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<int64_t>> order;
    auto it = perm.begin();
    for (int64_t k : schedule.steps) {
        std::vector<int64_t> step(it, it + k);
        std::sort(step.begin(), step.end());
        order.push_back(std::move(step));
        it += k;
    }
    return order;
}

std::vector<std::vector<int64_t>> checkerboard_order(int64_t h, int64_t w, int64_t steps) {
    if (steps < 1 || h * w < steps) {
        throw ConfigError("checkerboard order needs 1 <= steps <= h * w");
    }
    const int64_t anchor_steps = std::max<int64_t>(1, steps / 2);
    const int64_t other_steps = std::max<int64_t>(1, steps - anchor_steps);
    const int64_t other_offset = steps == 1 ? 0 : anchor_steps;
    std::vector<std::vector<int64_t>> order(static_cast<std::size_t>(steps));
    int64_t anchors = 0;
    int64_t others = 0;
    for (int64_t r = 0; r < h; ++r) {
        for (int64_t c = 0; c < w; ++c) {
            const int64_t p = r * w + c;
            if ((r + c) % 2 == 0) {
                order[static_cast<std::size_t>(anchors++ % anchor_steps)].push_back(p);
            } else {
                order[static_cast<std::size_t>(other_offset + others++ % other_steps)].push_back(p);
            }
        }
    }
    for (auto& step : order) std::sort(step.begin(), step.end());
    return order;
}

double bits_per_pixel(std::size_t bytes, int64_t frame_count, int64_t height, int64_t width) {
    return 8.0 * static_cast<double>(bytes) / static_cast<double>(frame_count * height * width);
}

EncodeResult encode_video(CgtModel& model, const std::vector<torch::Tensor>& frames,
                          const CodingOptions& options, uint32_t lambda_index) {
    if (frames.empty()) {
        throw ConfigError("no frames to encode");
    }
    torch::NoGradGuard no_grad;
    model->eval();
    auto& codec = model->codec();
    const auto& cfg = model->config().codec;
    const int64_t s = CodecConfig::kDownsampling;
    const int64_t height = frames.front().size(1);
    const int64_t width = frames.front().size(2);
    if (height % s != 0 || width % s != 0) {
        throw DimensionError("frame extent must be a multiple of " + std::to_string(s));
    }
    const int64_t h = height / s;
    const int64_t w = width / s;
    if (options.steps < 1 || options.steps > h * w) {
        throw ConfigError("decode steps must lie in [1, " + std::to_string(h * w) + "]");
    }
    if (!(options.alpha >= 0.0 && options.alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [0, 1]");
    }

    EncodeResult result;
    auto& header = result.stream.header;
    header.frame_h = static_cast<uint32_t>(height);
    header.frame_w = static_cast<uint32_t>(width);
    header.latent_h = static_cast<uint32_t>(h);
    header.latent_w = static_cast<uint32_t>(w);
    header.latent_c = static_cast<uint32_t>(cfg.latent_channels);
    header.lambda_index = lambda_index;
    header.decode_steps = static_cast<uint32_t>(options.steps);
    header.frame_count = static_cast<uint32_t>(frames.size());
    header.ordering = static_cast<uint32_t>(options.ordering);
    header.alpha_bits = std::bit_cast<uint32_t>(static_cast<float>(options.alpha));
    header.order_seed = options.seed;
    // The decoder only sees alpha through the header.
    CodingOptions coding = options;
    coding.alpha = static_cast<double>(std::bit_cast<float>(header.alpha_bits));

    torch::Tensor previous = torch::zeros({1, cfg.latent_channels, h, w});
    for (std::size_t t = 0; t < frames.size(); ++t) {
        check_frame(frames[t], height, width);
        if (static_cast<int64_t>(t) % options.gop == 0) {
            previous = torch::zeros_like(previous);
        }
        auto x = frames[t].unsqueeze(0).to(torch::kFloat);
        FrameContext ctx;
        ctx.temporal = codec->temporal_prior(previous);
        auto y = codec->encode(x, ctx.temporal);
        auto y_q = quantize(y);
        auto z_q = quantize(codec->hyper_encode(y));
        auto y_hp = codec->hyper_decode(z_q, h, w);
        ctx.fused = model->entropy()->fuse(previous, y_hp, ctx.temporal);

        FrameTrace trace;
        FrameChunk chunk;
        {
            const auto tables = codec->hyper_prior()->channel_tables();
            auto z = z_q.squeeze(0).to(torch::kInt).contiguous();
            auto za = z.accessor<int32_t, 3>();
            RangeEncoder enc;
            for (int64_t c = 0; c < z.size(0); ++c) {
                for (int64_t i = 0; i < z.size(1); ++i) {
                    for (int64_t j = 0; j < z.size(2); ++j) {
                        encode_symbol(enc, za[c][i][j], tables[static_cast<std::size_t>(c)]);
                        trace.hyper_bits += symbol_code_length(za[c][i][j], tables[static_cast<std::size_t>(c)]);
                    }
                }
            }
            chunk.hyper = enc.finish();
            trace.hyper = z;
        }

        auto truth = y_q.view({cfg.latent_channels, h * w}).to(torch::kInt).contiguous();
        auto ta = truth.accessor<int32_t, 2>();
        auto latent = torch::zeros({1, cfg.latent_channels, h, w});
        run_steps(model, ctx, latent, coding, frame_order_seed(options.seed, t), trace,
                  [&](const std::vector<int64_t>& positions, const std::vector<SymbolPMF>& tables) {
                      RangeEncoder enc;
                      std::vector<int32_t> symbols;
                      std::size_t k = 0;
                      for (int64_t p : positions) {
                          for (int64_t c = 0; c < cfg.latent_channels; ++c) {
                              encode_symbol(enc, ta[c][p], tables[k++]);
                              symbols.push_back(ta[c][p]);
                          }
                      }
                      chunk.segments.push_back(enc.finish());
                      return symbols;
                  });
        if (!torch::equal(latent, y_q)) {
            throw Error("revealed latent differs from the quantized latent");
        }
        trace.latent = truth.view({cfg.latent_channels, h, w});
        trace.reconstruction = codec->decode(y_q, ctx.temporal).clamp(0.0, 1.0).squeeze(0);
        result.stream.frames.push_back(std::move(chunk));
        result.frames.push_back(std::move(trace));
        previous = y_q;
    }
    return result;
}

DecodeResult decode_video(CgtModel& model, const Bitstream& stream, int64_t gop) {
    torch::NoGradGuard no_grad;
    model->eval();
    auto& codec = model->codec();
    const auto& cfg = model->config().codec;
    const auto& header = stream.header;
    const int64_t s = CodecConfig::kDownsampling;
    const int64_t h = header.latent_h;
    const int64_t w = header.latent_w;
    if (header.latent_c != static_cast<uint32_t>(cfg.latent_channels)) {
        throw FormatError("stream has " + std::to_string(header.latent_c) +
                          " latent channels, checkpoint " + std::to_string(cfg.latent_channels));
    }
    if (static_cast<int64_t>(header.frame_h) != h * s || static_cast<int64_t>(header.frame_w) != w * s ||
        h == 0 || w == 0) {
        throw FormatError("frame and latent dimensions in the header are inconsistent");
    }
    if (header.decode_steps == 0 || header.decode_steps > static_cast<uint32_t>(h * w)) {
        throw FormatError("decoding steps in the header must lie in [1, latent positions]");
    }
    if (header.ordering > static_cast<uint32_t>(Ordering::Checkerboard)) {
        throw FormatError("unknown ordering in header");
    }
    if (stream.frames.size() != header.frame_count) {
        throw FormatError("frame count does not match the header");
    }
    CodingOptions options;
    options.ordering = static_cast<Ordering>(header.ordering);
    options.alpha = static_cast<double>(std::bit_cast<float>(header.alpha_bits));
    options.steps = header.decode_steps;
    options.seed = header.order_seed;
    options.gop = gop;
    if (!(options.alpha >= 0.0 && options.alpha <= 1.0)) {
        throw FormatError("alpha in header outside [0, 1]");
    }

    DecodeResult result;
    torch::Tensor previous = torch::zeros({1, cfg.latent_channels, h, w});
    auto hyper = codec->hyper_prior();
    const int64_t hz = (h + 1) / 2;
    const int64_t wz = (w + 1) / 2;
    for (std::size_t t = 0; t < stream.frames.size(); ++t) {
        const auto& chunk = stream.frames[t];
        if (chunk.segments.size() != header.decode_steps) {
            throw FormatError("frame " + std::to_string(t) + " has " + std::to_string(chunk.segments.size()) +
                              " segments, header says " + std::to_string(header.decode_steps));
        }
        if (static_cast<int64_t>(t) % gop == 0) {
            previous = torch::zeros_like(previous);
        }
        FrameTrace trace;
        FrameContext ctx;
        ctx.temporal = codec->temporal_prior(previous);

        const auto tables = hyper->channel_tables();
        auto z = torch::zeros({hyper->channels(), hz, wz}, torch::kInt);
        {
            auto za = z.accessor<int32_t, 3>();
            RangeDecoder dec(chunk.hyper);
            for (int64_t c = 0; c < z.size(0); ++c) {
                for (int64_t i = 0; i < hz; ++i) {
                    for (int64_t j = 0; j < wz; ++j) {
                        za[c][i][j] = decode_symbol(dec, tables[static_cast<std::size_t>(c)]);
                        trace.hyper_bits += symbol_code_length(za[c][i][j], tables[static_cast<std::size_t>(c)]);
                    }
                }
            }
            dec.finish();
        }
        trace.hyper = z;
        auto y_hp = codec->hyper_decode(z.unsqueeze(0).to(torch::kFloat), h, w);
        ctx.fused = model->entropy()->fuse(previous, y_hp, ctx.temporal);

        auto latent = torch::zeros({1, cfg.latent_channels, h, w});
        std::size_t segment = 0;
        run_steps(model, ctx, latent, options, frame_order_seed(options.seed, t), trace,
                  [&](const std::vector<int64_t>&, const std::vector<SymbolPMF>& tables) {
                      RangeDecoder dec(chunk.segments.at(segment++));
                      std::vector<int32_t> symbols;
                      symbols.reserve(tables.size());
                      for (const auto& table : tables) {
                          symbols.push_back(decode_symbol(dec, table));
                      }
                      dec.finish();
                      return symbols;
                  });
        trace.latent = latent.squeeze(0).to(torch::kInt);
        trace.reconstruction = codec->decode(latent, ctx.temporal).clamp(0.0, 1.0).squeeze(0);
        result.frames.push_back(trace.reconstruction);
        result.traces.push_back(std::move(trace));
        previous = latent;
    }
    return result;
}

}  // namespace cgt
