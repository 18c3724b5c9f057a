#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "cgt/ablation.hpp"
#include "cgt/errors.hpp"
#include "cgt/log.hpp"
#include "cgt/metrics.hpp"
#include "cgt/model.hpp"
#include "cgt/pipeline.hpp"
#include "cgt/synthetic.hpp"
#include "cgt/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kUsageError = 2;
constexpr int kDataError = 3;

struct TrainArgs {
    std::optional<int64_t> stage;
    std::optional<double> lambda;
    std::optional<double> alpha;
    std::optional<int64_t> steps;
    std::optional<uint64_t> seed;
    std::optional<int64_t> iterations;
    std::optional<int64_t> batch;
    std::optional<double> lr;
    std::optional<std::string> variant;
    std::string config;
    std::string init;
    std::string out = "cgt.pt";
    std::string log;
};

struct CodeArgs {
    std::string input;
    std::string output;
    std::string checkpoint;
    std::string ordering = "dependency";
    double alpha = 0.5;
    int64_t steps = 8;
    uint32_t order_seed = 0;
    int64_t gop = 8;
};

int run_train(const TrainArgs& a) {
    cgt::TrainConfig cfg;
    if (!a.config.empty()) cgt::load_train_config(a.config, cfg);
    if (a.stage) cfg.stage = *a.stage;
    if (a.lambda) cfg.lambda = *a.lambda;
    if (a.alpha) cfg.alpha = *a.alpha;
    if (a.steps) cfg.decode_steps = *a.steps;
    if (a.seed) cfg.seed = *a.seed;
    if (a.iterations) cfg.steps = *a.iterations;
    if (a.batch) cfg.batch_size = *a.batch;
    if (a.lr) cfg.learning_rate = *a.lr;
    if (a.variant) cfg.context_path = cgt::parse_context_path(*a.variant);
    cfg.validate();

    cgt::CgtModel model{nullptr};
    int64_t done = 0;
    if (!a.init.empty()) {
        auto loaded = cgt::load_checkpoint(a.init);
        model = loaded.model;
        done = loaded.info.step;
        if (loaded.info.config.context_path != cfg.context_path) {
            throw cgt::ConfigError("checkpoint context path differs from the requested variant");
        }
    } else {
        torch::manual_seed(cfg.seed);
        cgt::ModelConfig mc;
        mc.context_path = cfg.context_path;
        model = cgt::CgtModel(mc);
    }
    const auto result = cgt::train_stage(model, cfg, a.log);
    cgt::CheckpointInfo info{model->config(), cfg.lambda, cgt::lambda_index(cfg.lambda), cfg.stage,
                             done + cfg.steps};
    cgt::save_checkpoint(a.out, model, info);
    std::printf("stage %lld: %lld steps, final loss %.4f (rate_y %.1f, rate_z %.1f, mse %.6f) -> %s\n",
                static_cast<long long>(cfg.stage), static_cast<long long>(cfg.steps), result.last.total,
                result.last.rate_y, result.last.rate_z, result.last.distortion, a.out.c_str());
    return 0;
}

int run_encode(const CodeArgs& a) {
    auto loaded = cgt::load_checkpoint(a.checkpoint);
    const auto frames = cgt::read_clip(a.input);
    cgt::CodingOptions options;
    options.ordering = cgt::parse_ordering(a.ordering);
    options.alpha = a.alpha;
    options.steps = a.steps;
    options.seed = a.order_seed;
    options.gop = a.gop;
    const auto encoded = cgt::encode_video(loaded.model, frames, options, loaded.info.lambda_index);
    encoded.stream.write_file(a.output);
    double quality = 0.0;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        quality += cgt::psnr(frames[t], encoded.frames[t].reconstruction);
    }
    std::printf("%zu frames, %zu bytes, %.4f bpp, mean PSNR %.2f dB\n", frames.size(),
                encoded.stream.byte_size(),
                cgt::bits_per_pixel(encoded.stream.byte_size(), static_cast<int64_t>(frames.size()),
                                    frames[0].size(1), frames[0].size(2)),
                quality / static_cast<double>(frames.size()));
    return 0;
}

int run_decode(const CodeArgs& a) {
    auto loaded = cgt::load_checkpoint(a.checkpoint);
    const auto stream = cgt::Bitstream::read_file(a.input);
    if (stream.header.lambda_index != loaded.info.lambda_index) {
        throw cgt::FormatError("stream was coded at lambda " +
                               std::to_string(cgt::lambda_value(stream.header.lambda_index)) +
                               ", checkpoint is for lambda " + std::to_string(loaded.info.lambda));
    }
    const auto decoded = cgt::decode_video(loaded.model, stream, a.gop);
    cgt::write_frames(a.output, decoded.frames);
    std::printf("%zu frames -> %s\n", decoded.frames.size(), a.output.c_str());
    return 0;
}

int run_bench(const std::string& variant, const std::string& checkpoint, int64_t iterations) {
    cgt::CgtModel model{nullptr};
    if (!checkpoint.empty()) {
        model = cgt::load_checkpoint(checkpoint).model;
    } else {
        torch::manual_seed(0);
        cgt::ModelConfig mc;
        mc.context_path = cgt::parse_context_path(variant);
        model = cgt::CgtModel(mc);
    }
    const auto timing = cgt::time_entropy_forward(model, iterations);
    std::printf("variant %s: median entropy forward %.3f ms over %lld runs\n",
                cgt::to_string(model->config().context_path).c_str(), timing.median_ms,
                static_cast<long long>(iterations));
    return 0;
}

std::vector<double> parse_lambdas(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::logic_error&) {
            throw cgt::ConfigError("bad lambda '" + item + "'");
        }
        cgt::lambda_index(out.back());
    }
    if (out.empty()) throw cgt::ConfigError("no lambdas given");
    return out;
}

fs::path checkpoint_for(const fs::path& dir, double lambda) {
    return dir / ("cgt_l" + std::to_string(static_cast<int64_t>(lambda)) + ".pt");
}

int run_rd(const std::string& lambdas, const std::string& out, const std::string& dir, int64_t clips,
           int64_t frames, int64_t steps) {
    const auto values = parse_lambdas(lambdas);
    const auto data = cgt::synthetic_clips(0, clips, frames);
    cgt::CodingOptions options;
    options.steps = steps;
    cgt::RDCurve curve;
    for (double lambda : values) {
        auto loaded = cgt::load_checkpoint(checkpoint_for(dir, lambda));
        curve.push_back(cgt::rd_point(loaded.model, data, options, loaded.info.lambda_index));
        std::printf("lambda %g: %.4f bpp, %.2f dB\n", lambda, curve.back().bpp, curve.back().psnr);
    }
    cgt::write_rd_csv(out, values, curve);
    return 0;
}

int run_ablation(const std::string& lambdas, const std::string& dir, int64_t clips, int64_t frames,
                 int64_t steps) {
    const auto data = cgt::synthetic_clips(0, clips, frames);
    cgt::CodingOptions options;
    options.steps = steps;
    std::printf("%-8s %-13s %10s %10s\n", "lambda", "ordering", "bpp", "psnr");
    for (double lambda : parse_lambdas(lambdas)) {
        auto loaded = cgt::load_checkpoint(checkpoint_for(dir, lambda));
        const auto report = cgt::ordering_ablation(loaded.model, data, options, loaded.info.lambda_index);
        for (const auto& r : report.results) {
            std::printf("%-8g %-13s %10.5f %10.3f\n", lambda, cgt::to_string(r.ordering).c_str(), r.bpp,
                        r.psnr);
        }
        if (!report.identical_latents) {
            std::printf("warning: orderings produced different latents\n");
        }
    }
    std::printf("\n%-8s %-6s %10s %10s\n", "lambda", "alpha", "bpp", "psnr");
    for (double lambda : parse_lambdas(lambdas)) {
        auto loaded = cgt::load_checkpoint(checkpoint_for(dir, lambda));
        for (const auto& r : cgt::alpha_sweep(loaded.model, data, {0.0, 0.5, 1.0}, options,
                                              loaded.info.lambda_index)) {
            std::printf("%-8g %-6.2f %10.5f %10.3f\n", lambda, r.alpha, r.point.bpp, r.point.psnr);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learned video coding with a context-guided transformer entropy model"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string level = "info";
    app.add_option("--log-level", level, "trace, debug, info, warn, error or off");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train one stage and save a checkpoint");
    train_cmd->add_option("--stage", train.stage, "1 codec, 2 entropy model, 3 joint")->check(CLI::Range(1, 3));
    train_cmd->add_option("--lambda", train.lambda, "Rate-distortion trade-off (256, 512, 1024, 2048)");
    train_cmd->add_option("--alpha", train.alpha, "Certainty weight of the selection score")
        ->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--steps", train.steps, "Decoding steps T the selection size is drawn from");
    train_cmd->add_option("--seed", train.seed, "Seed for initialisation, data and masks");
    train_cmd->add_option("--config", train.config, "JSON file with training fields")->check(CLI::ExistingFile);
    train_cmd->add_option("--iterations", train.iterations, "Optimizer iterations");
    train_cmd->add_option("--batch", train.batch, "Clips per iteration");
    train_cmd->add_option("--lr", train.lr, "Adam learning rate");
    train_cmd->add_option("--variant", train.variant, "Context path: tcr or full");
    train_cmd->add_option("--init", train.init, "Checkpoint to continue from")->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train.out, "Output checkpoint");
    train_cmd->add_option("--log", train.log, "Append JSON-lines losses here");

    CodeArgs code;
    auto* encode_cmd = app.add_subcommand("encode", "Encode a frame directory");
    encode_cmd->add_option("input", code.input, "Directory with manifest.json and PNG frames")->required();
    encode_cmd->add_option("output", code.output, "Output bitstream")->required();
    encode_cmd->add_option("--checkpoint", code.checkpoint)->required();
    encode_cmd->add_option("--ordering", code.ordering, "dependency, random or checkerboard");
    encode_cmd->add_option("--alpha", code.alpha)->check(CLI::Range(0.0, 1.0));
    encode_cmd->add_option("--steps", code.steps, "Decoding steps T");
    encode_cmd->add_option("--order-seed", code.order_seed, "Seed of the random ordering");
    encode_cmd->add_option("--gop", code.gop, "Intra period")->check(CLI::PositiveNumber);

    auto* decode_cmd = app.add_subcommand("decode", "Decode a bitstream into PNG frames");
    decode_cmd->add_option("input", code.input, "Bitstream")->required();
    decode_cmd->add_option("output", code.output, "Output directory")->required();
    decode_cmd->add_option("--checkpoint", code.checkpoint)->required();
    decode_cmd->add_option("--gop", code.gop, "Intra period")->check(CLI::PositiveNumber);

    std::string anchor, test;
    auto* eval_cmd = app.add_subcommand("eval", "BD-rate of one RD curve against another");
    eval_cmd->add_option("--anchor", anchor, "CSV with bpp and psnr columns")->required();
    eval_cmd->add_option("--test", test, "CSV with bpp and psnr columns")->required();

    cgt::SyntheticClipSpec gen;
    std::string gen_out;
    auto* gen_cmd = app.add_subcommand("gen", "Render a synthetic clip");
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--frames", gen.frames)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--size", gen.size)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out", gen_out, "Output directory (default clip_<seed>)");

    std::string variant = "tcr", bench_checkpoint;
    int64_t bench_iterations = 30;
    auto* bench_cmd = app.add_subcommand("bench", "Time one entropy-model forward");
    bench_cmd->add_option("--variant", variant, "tcr or full")->check(CLI::IsMember({"tcr", "full"}));
    bench_cmd->add_option("--checkpoint", bench_checkpoint, "Use trained weights");
    bench_cmd->add_option("--iterations", bench_iterations)->check(CLI::PositiveNumber);

    std::string lambdas = "256,512,1024,2048", rd_out = "curve.csv", ckpt_dir = ".";
    int64_t clips = 10, frames = 4, steps = 8;
    auto* rd_cmd = app.add_subcommand("rd", "Rate-distortion points on synthetic clips");
    rd_cmd->add_option("--lambdas", lambdas, "Comma-separated lambdas");
    rd_cmd->add_option("--out", rd_out, "CSV output");
    auto* ablation_cmd = app.add_subcommand("ablation", "Ordering and alpha ablations");
    ablation_cmd->add_option("--lambdas", lambdas, "Comma-separated lambdas");
    for (auto* cmd : {rd_cmd, ablation_cmd}) {
        cmd->add_option("--checkpoints", ckpt_dir, "Directory with cgt_l<lambda>.pt files");
        cmd->add_option("--clips", clips, "Synthetic clips (seeds from 0)")->check(CLI::PositiveNumber);
        cmd->add_option("--frames", frames, "Frames per clip")->check(CLI::PositiveNumber);
        cmd->add_option("--steps", steps, "Decoding steps T")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        cgt::log::set_level(level);
        if (*train_cmd) return run_train(train);
        if (*encode_cmd) return run_encode(code);
        if (*decode_cmd) return run_decode(code);
        if (*eval_cmd) {
            const double delta = cgt::bd_rate(cgt::read_rd_csv(anchor), cgt::read_rd_csv(test));
            std::printf("BD-rate: %+.4f%%\n", delta);
            return 0;
        }
        if (*gen_cmd) {
            const fs::path dir = gen_out.empty() ? fs::path("clip_" + std::to_string(gen.seed)) : fs::path(gen_out);
            cgt::write_clip(dir, gen);
            std::printf("%lld frames -> %s\n", static_cast<long long>(gen.frames), dir.c_str());
            return 0;
        }
        if (*bench_cmd) return run_bench(variant, bench_checkpoint, bench_iterations);
        if (*rd_cmd) return run_rd(lambdas, rd_out, ckpt_dir, clips, frames, steps);
        if (*ablation_cmd) return run_ablation(lambdas, ckpt_dir, clips, frames, steps);
    } catch (const cgt::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const cgt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsageError;
}
