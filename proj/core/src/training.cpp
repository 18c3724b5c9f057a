#include "cgt/training.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "cgt/errors.hpp"
#include "cgt/frame_codec.hpp"
#include "cgt/log.hpp"
#include "cgt/schedule.hpp"
#include "cgt/synthetic.hpp"

namespace cgt {

namespace {

constexpr uint64_t kTrainSeedBase = 1'000'000;

torch::Tensor per_sample_sum(const torch::Tensor& t) { return t.flatten(1).sum(1); }

torch::Tensor hyper_bits(FrameCodec& codec, const torch::Tensor& z_q) {
    return per_sample_sum(-torch::log2(codec->hyper_prior()->likelihood(z_q)));
}

void check_terms(const LossBreakdown& l) {
    const std::pair<const char*, double> terms[] = {
        {"rate_y", l.rate_y}, {"rate_z", l.rate_z}, {"distortion", l.distortion}, {"total", l.total}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite loss term ") + name);
        }
    }
}

LossBreakdown finish(const torch::Tensor& rate_y, const torch::Tensor& rate_z,
                     const torch::Tensor& distortion, double lambda) {
    LossBreakdown out;
    out.loss = rate_y.mean() + rate_z.mean() + distortion_weight(lambda) * distortion.mean();
    out.rate_y = rate_y.mean().item<double>();
    out.rate_z = rate_z.mean().item<double>();
    out.distortion = distortion.mean().item<double>();
    out.total = out.loss.item<double>();
    check_terms(out);
    return out;
}

uint64_t clip_seed(const TrainConfig& cfg, int64_t step, int64_t index) {
    int64_t n = step * cfg.batch_size + index;
    if (cfg.clip_pool > 0) n %= cfg.clip_pool;
    return kTrainSeedBase + cfg.seed * 7'919'000ull + static_cast<uint64_t>(n);
}

torch::Tensor clips_for_step(const TrainConfig& cfg, int64_t step) {
    std::vector<torch::Tensor> clips;
    for (int64_t i = 0; i < cfg.batch_size; ++i) {
        SyntheticClipSpec spec;
        spec.seed = clip_seed(cfg, step, i);
        spec.frames = cfg.clip_frames;
        spec.size = cfg.frame_size;
        clips.push_back(render_clip(spec));
    }
    return torch::stack(clips);
}

}  // namespace

void TrainConfig::validate() const {
    if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2 or 3");
    lambda_index(lambda);
    if (steps < 0 || batch_size < 1 || clip_frames < 1 || decode_steps < 1) {
        throw ConfigError("steps, batch size, clip frames and decode steps must be positive");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(learning_rate > 0.0) || !(temperature > 0.0)) {
        throw ConfigError("learning rate and temperature must be positive");
    }
    if (!(min_mask_ratio > 0.0 && min_mask_ratio <= 1.0)) {
        throw ConfigError("min mask ratio must lie in (0, 1]");
    }
    if (frame_size % CodecConfig::kDownsampling != 0) {
        throw ConfigError("frame size must be a multiple of the downsampling factor");
    }
}

void load_train_config(const std::filesystem::path& path, TrainConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "lambda") cfg.lambda = value.get<double>();
            else if (key == "stage") cfg.stage = value.get<int64_t>();
            else if (key == "steps") cfg.steps = value.get<int64_t>();
            else if (key == "batch_size") cfg.batch_size = value.get<int64_t>();
            else if (key == "alpha") cfg.alpha = value.get<double>();
            else if (key == "decode_steps") cfg.decode_steps = value.get<int64_t>();
            else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
            else if (key == "seed") cfg.seed = value.get<uint64_t>();
            else if (key == "temperature") cfg.temperature = value.get<double>();
            else if (key == "clip_norm") cfg.clip_norm = value.get<double>();
            else if (key == "clip_frames") cfg.clip_frames = value.get<int64_t>();
            else if (key == "clip_pool") cfg.clip_pool = value.get<int64_t>();
            else if (key == "frame_size") cfg.frame_size = value.get<int64_t>();
            else if (key == "min_mask_ratio") cfg.min_mask_ratio = value.get<double>();
            else if (key == "log_every") cfg.log_every = value.get<int64_t>();
            else if (key == "context_path") cfg.context_path = parse_context_path(value.get<std::string>());
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad value in config " + path.string() + ": " + e.what());
    }
}

double distortion_weight(double lambda) { return lambda * 255.0 * 255.0; }

LossBreakdown codec_loss(CgtModel& model, const torch::Tensor& clips, double lambda) {
    auto& codec = model->codec();
    const int64_t frames = clips.size(1);
    const int64_t s = CodecConfig::kDownsampling;
    const int64_t h = clips.size(3) / s;
    const int64_t w = clips.size(4) / s;
    auto previous = torch::zeros({clips.size(0), model->config().codec.latent_channels, h, w});
    std::vector<torch::Tensor> ry, rz, dist;
    for (int64_t t = 0; t < frames; ++t) {
        auto x = clips.select(1, t);
        auto temporal = codec->temporal_prior(previous);
        auto y = codec->encode(x, temporal);
        auto y_q = quantize_ste(y);
        auto z_q = quantize_ste(codec->hyper_encode(y));
        auto hyper = codec->hyper_decode(z_q, h, w);
        auto prior = codec->prior_params(hyper, temporal);
        ry.push_back(per_sample_sum(gaussian_bits(y_q, prior.mu, prior.sigma)));
        rz.push_back(hyper_bits(codec, z_q));
        dist.push_back((codec->decode(y_q, temporal) - x).pow(2).flatten(1).mean(1));
        previous = y_q.detach();
    }
    return finish(torch::stack(ry), torch::stack(rz), torch::stack(dist), lambda);
}

std::vector<LatentSample> precompute_latents(CgtModel& model, const torch::Tensor& clips) {
    torch::NoGradGuard no_grad;
    auto& codec = model->codec();
    const int64_t s = CodecConfig::kDownsampling;
    const int64_t h = clips.size(3) / s;
    const int64_t w = clips.size(4) / s;
    const double limit = static_cast<double>(kMaxCodableMagnitude);
    std::vector<LatentSample> out;
    for (int64_t b = 0; b < clips.size(0); ++b) {
        auto previous = torch::zeros({1, model->config().codec.latent_channels, h, w});
        for (int64_t t = 0; t < clips.size(1); ++t) {
            auto x = clips[b][t].unsqueeze(0);
            auto temporal = codec->temporal_prior(previous);
            auto y = codec->encode(x, temporal);
            auto y_q = round_half_even(y).clamp(-limit, limit);
            auto z_q = round_half_even(codec->hyper_encode(y)).clamp(-limit, limit);
            auto hyper = codec->hyper_decode(z_q, h, w);
            LatentSample sample;
            sample.latent = y_q.squeeze(0);
            sample.previous = previous.squeeze(0);
            sample.hyper = hyper.squeeze(0);
            sample.temporal = temporal.squeeze(0);
            sample.rate_z = hyper_bits(codec, z_q).item<double>();
            sample.distortion = (codec->decode(y_q, temporal) - x).pow(2).mean().item<double>();
            out.push_back(std::move(sample));
            previous = y_q;
        }
    }
    return out;
}

torch::Tensor masked_rate(CgtModel& model, const torch::Tensor& latent, const torch::Tensor& previous,
                          const torch::Tensor& hyper, const torch::Tensor& temporal,
                          const MaskingOptions& options, std::mt19937_64& rng,
                          const std::optional<double>& mask_ratio) {
    auto& entropy = model->entropy();
    const int64_t b = latent.size(0);
    const int64_t h = latent.size(2);
    const int64_t w = latent.size(3);
    auto fused = entropy->fuse(previous, hyper, temporal);
    auto values = latent.permute({0, 2, 3, 1});

    std::uniform_real_distribution<double> ratio(options.min_mask_ratio, 1.0);
    std::vector<torch::Tensor> masks;
    for (int64_t i = 0; i < b; ++i) {
        masks.push_back(random_mask(h, w, mask_ratio.value_or(ratio(rng)), rng()));
    }
    auto mask = torch::stack(masks);
    const auto schedule = sinusoidal_schedule(h * w, std::min(options.decode_steps, h * w));
    std::uniform_int_distribution<std::size_t> pick(0, schedule.steps.size() - 1);
    const int64_t k = schedule.steps[pick(rng)];

    auto decoder = entropy->decoder();
    auto selection = teacher_select_and_unmask(decoder, values, mask, fused, options.alpha, k,
                                               options.temperature, SelectMode::Train);
    auto student = decoder->forward(values, selection.reveal, fused);
    auto teacher_bits = gaussian_bits(values, selection.teacher.params.mu,
                                      selection.teacher.params.sigma).sum(-1);
    auto student_bits = gaussian_bits(values, student.params.mu, student.params.sigma).sum(-1);
    auto masked = mask.to(values.scalar_type());
    auto chosen = selection.reveal.detach() * masked;
    auto bits = masked * (chosen * teacher_bits + (1.0 - chosen) * student_bits);
    return bits.flatten(1).sum(1);
}

LossBreakdown entropy_loss(CgtModel& model, const std::vector<const LatentSample*>& batch,
                           double lambda, const MaskingOptions& options, std::mt19937_64& rng) {
    std::vector<torch::Tensor> latent, previous, hyper, temporal;
    std::vector<double> rz, dist;
    for (const auto* s : batch) {
        latent.push_back(s->latent);
        previous.push_back(s->previous);
        hyper.push_back(s->hyper);
        temporal.push_back(s->temporal);
        rz.push_back(s->rate_z);
        dist.push_back(s->distortion);
    }
    auto rate_y = masked_rate(model, torch::stack(latent), torch::stack(previous), torch::stack(hyper),
                              torch::stack(temporal), options, rng);
    return finish(rate_y, torch::tensor(rz, torch::kDouble), torch::tensor(dist, torch::kDouble), lambda);
}

LossBreakdown joint_loss(CgtModel& model, const torch::Tensor& clips, double lambda,
                         const MaskingOptions& options, std::mt19937_64& rng) {
    auto& codec = model->codec();
    const int64_t s = CodecConfig::kDownsampling;
    const int64_t h = clips.size(3) / s;
    const int64_t w = clips.size(4) / s;
    auto previous = torch::zeros({clips.size(0), model->config().codec.latent_channels, h, w});
    std::vector<torch::Tensor> ry, rz, dist;
    for (int64_t t = 0; t < clips.size(1); ++t) {
        auto x = clips.select(1, t);
        auto temporal = codec->temporal_prior(previous);
        auto y = codec->encode(x, temporal);
        auto y_q = quantize_ste(y);
        auto z_q = quantize_ste(codec->hyper_encode(y));
        auto hyper = codec->hyper_decode(z_q, h, w);
        ry.push_back(masked_rate(model, y_q, previous, hyper, temporal, options, rng));
        rz.push_back(hyper_bits(codec, z_q));
        dist.push_back((codec->decode(y_q, temporal) - x).pow(2).flatten(1).mean(1));
        previous = y_q.detach();
    }
    return finish(torch::stack(ry), torch::stack(rz), torch::stack(dist), lambda);
}

std::vector<torch::Tensor> stage_parameters(CgtModel& model, int64_t stage) {
    switch (stage) {
        case 1: return model->codec()->parameters();
        case 2: return model->entropy()->parameters();
        case 3: return model->parameters();
        default: throw ConfigError("stage must be 1, 2 or 3");
    }
}

torch::Tensor synthetic_batch(uint64_t first_seed, int64_t count, int64_t frames, int64_t size) {
    std::vector<torch::Tensor> clips;
    for (int64_t i = 0; i < count; ++i) {
        SyntheticClipSpec spec;
        spec.seed = first_seed + static_cast<uint64_t>(i);
        spec.frames = frames;
        spec.size = size;
        clips.push_back(render_clip(spec));
    }
    return torch::stack(clips);
}

TrainResult train_stage(CgtModel& model, const TrainConfig& cfg, const std::filesystem::path& log_path,
                        const std::function<void(const TrainProgress&)>& on_step) {
    cfg.validate();
    torch::manual_seed(cfg.seed);
    auto params = stage_parameters(model, cfg.stage);

    // Everything outside the stage is frozen for the duration of the run.
    std::set<const void*> trained;
    for (const auto& p : params) trained.insert(p.unsafeGetTensorImpl());
    std::vector<std::pair<torch::Tensor, bool>> saved;
    for (auto& p : model->parameters()) {
        saved.emplace_back(p, p.requires_grad());
        p.set_requires_grad(trained.count(p.unsafeGetTensorImpl()) > 0);
    }

    torch::optim::Adam optimizer(params, torch::optim::AdamOptions(cfg.learning_rate));
    std::ofstream log_file;
    if (!log_path.empty()) {
        if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
        log_file.open(log_path, std::ios::app);
        if (!log_file) throw ConfigError("cannot open training log " + log_path.string());
    }
    MaskingOptions masking{cfg.alpha, cfg.temperature, cfg.decode_steps, cfg.min_mask_ratio};

    TrainResult result;
    model->train();
    for (int64_t step = 0; step < cfg.steps; ++step) {
        std::mt19937_64 rng(cfg.seed * 1'000'003ull + static_cast<uint64_t>(step));
        auto clips = clips_for_step(cfg, step);
        LossBreakdown loss;
        if (cfg.stage == 1) {
            loss = codec_loss(model, clips, cfg.lambda);
        } else if (cfg.stage == 2) {
            model->codec()->eval();
            const auto samples = precompute_latents(model, clips);
            std::vector<const LatentSample*> batch;
            for (const auto& s : samples) batch.push_back(&s);
            loss = entropy_loss(model, batch, cfg.lambda, masking, rng);
        } else {
            loss = joint_loss(model, clips, cfg.lambda, masking, rng);
        }
        optimizer.zero_grad();
        loss.loss.backward();
        if (cfg.clip_norm > 0.0) {
            torch::nn::utils::clip_grad_norm_(params, cfg.clip_norm);
        }
        optimizer.step();
        result.totals.push_back(loss.total);
        result.last = loss;

        const bool log_now = cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps);
        if (log_now) {
            nlohmann::json line{{"stage", cfg.stage},         {"step", step},
                                {"rate_y", loss.rate_y},     {"rate_z", loss.rate_z},
                                {"distortion", loss.distortion}, {"total", loss.total}};
            if (log_file) log_file << line.dump() << "\n" << std::flush;
            log::info("stage " + std::to_string(cfg.stage) + " step " + std::to_string(step) +
                      " total " + std::to_string(loss.total) + " rate_y " + std::to_string(loss.rate_y) +
                      " distortion " + std::to_string(loss.distortion));
        }
        if (on_step) on_step({step, loss});
    }
    model->eval();
    for (auto& [p, flag] : saved) p.set_requires_grad(flag);
    return result;
}

}  // namespace cgt
