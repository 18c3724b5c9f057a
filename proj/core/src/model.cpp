#include "cgt/model.hpp"

#include <array>
#include <string>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

constexpr std::array<double, 4> kLambdas{256.0, 512.0, 1024.0, 2048.0};

torch::Tensor to_tokens(torch::nn::Linear& proj, const torch::Tensor& grid, int64_t dim) {
    auto t = proj(grid.permute({0, 2, 3, 1}));
    return t + position_encoding_2d(grid.size(2), grid.size(3), dim);
}

void put(torch::serialize::OutputArchive& archive, const std::string& key, int64_t v) {
    archive.write("meta." + key, c10::IValue(v));
}

void put(torch::serialize::OutputArchive& archive, const std::string& key, double v) {
    archive.write("meta." + key, c10::IValue(v));
}

c10::IValue get(torch::serialize::InputArchive& archive, const std::string& key) {
    c10::IValue v;
    if (!archive.try_read("meta." + key, v)) {
        throw FormatError("checkpoint lacks field '" + key + "'");
    }
    return v;
}

}  // namespace

std::string to_string(ContextPath path) {
    return path == ContextPath::Resampler ? "tcr" : "full";
}

ContextPath parse_context_path(const std::string& name) {
    if (name == "tcr") return ContextPath::Resampler;
    if (name == "full") return ContextPath::FullAttention;
    throw ConfigError("unknown context path '" + name + "' (expected tcr or full)");
}

CgtEntropyModelImpl::CgtEntropyModelImpl(const ModelConfig& config) : config_(config) {
    const auto& codec = config.codec;
    previous_proj_ = register_module("previous_proj",
                                     torch::nn::Linear(codec.latent_channels, config.dim));
    hyper_proj_ = register_module("hyper_proj",
                                  torch::nn::Linear(codec.hyper_feature_channels, config.dim));
    temporal_proj_ = register_module(
        "temporal_proj", torch::nn::Linear(codec.temporal_feature_channels, config.dim));
    if (config.context_path == ContextPath::Resampler) {
        resampler_ = register_module(
            "resampler", TemporalContextResampler(ResamplerOptions{
                             config.dim, config.heads, config.mlp_ratio, config.query_grid,
                             config.window_grid, config.resampler_blocks}));
    }
    fusion_ = register_module("fusion", ContextFusion(FusionOptions{config.dim, config.heads,
                                                                    config.mlp_ratio,
                                                                    config.window_grid,
                                                                    config.fusion_blocks}));
    DecoderOptions decoder;
    decoder.latent_channels = codec.latent_channels;
    decoder.dim = config.dim;
    decoder.heads = config.heads;
    decoder.mlp_ratio = config.mlp_ratio;
    decoder.blocks = config.decoder_blocks;
    decoder.context_groups = kContextTypes;
    decoder.window_grid = config.window_grid;
    decoder_ = register_module("decoder", SpatialDecoder(decoder));
}

torch::Tensor CgtEntropyModelImpl::fuse(const torch::Tensor& previous_latent,
                                        const torch::Tensor& hyper_features,
                                        const torch::Tensor& temporal_features) {
    if (previous_latent.dim() != 4 || hyper_features.dim() != 4 || temporal_features.dim() != 4 ||
        previous_latent.sizes().slice(2) != hyper_features.sizes().slice(2) ||
        previous_latent.sizes().slice(2) != temporal_features.sizes().slice(2)) {
        throw DimensionError("context grids must be [B, ch, h, w] with a common h, w");
    }
    auto contexts = torch::stack({to_tokens(previous_proj_, previous_latent, config_.dim),
                                  to_tokens(hyper_proj_, hyper_features, config_.dim),
                                  to_tokens(temporal_proj_, temporal_features, config_.dim)},
                                 1);
    if (resampler_) {
        contexts = resampler_->forward(contexts);
    }
    return fusion_->forward(contexts);
}

DecoderOutput CgtEntropyModelImpl::predict(const torch::Tensor& latent, const torch::Tensor& reveal,
                                           const torch::Tensor& fused) {
    return decoder_->forward(latent.permute({0, 2, 3, 1}), reveal, fused);
}

CgtModelImpl::CgtModelImpl(const ModelConfig& config) : config_(config) {
    codec_ = register_module("codec", FrameCodec(config.codec));
    entropy_ = register_module("entropy", CgtEntropyModel(config));
}

uint32_t lambda_index(double lambda) {
    for (std::size_t i = 0; i < kLambdas.size(); ++i) {
        if (kLambdas[i] == lambda) return static_cast<uint32_t>(i);
    }
    throw ConfigError("lambda " + std::to_string(lambda) + " is not in {256, 512, 1024, 2048}");
}

double lambda_value(uint32_t index) {
    if (index >= kLambdas.size()) {
        throw FormatError("lambda index " + std::to_string(index) + " out of range");
    }
    return kLambdas[index];
}

void save_checkpoint(const std::filesystem::path& path, CgtModel& model, const CheckpointInfo& info) {
    torch::serialize::OutputArchive archive;
    model->save(archive);
    const auto& c = info.config;
    put(archive, "format_version", kCheckpointFormatVersion);
    put(archive, "latent_channels", c.codec.latent_channels);
    put(archive, "hidden_channels", c.codec.hidden_channels);
    put(archive, "hyper_channels", c.codec.hyper_channels);
    put(archive, "hyper_feature_channels", c.codec.hyper_feature_channels);
    put(archive, "temporal_feature_channels", c.codec.temporal_feature_channels);
    put(archive, "dim", c.dim);
    put(archive, "heads", c.heads);
    put(archive, "mlp_ratio", c.mlp_ratio);
    put(archive, "window_grid", c.window_grid);
    put(archive, "query_grid", c.query_grid);
    put(archive, "resampler_blocks", c.resampler_blocks);
    put(archive, "fusion_blocks", c.fusion_blocks);
    put(archive, "decoder_blocks", c.decoder_blocks);
    put(archive, "context_path", static_cast<int64_t>(c.context_path));
    put(archive, "lambda", info.lambda);
    put(archive, "lambda_index", static_cast<int64_t>(info.lambda_index));
    put(archive, "stage", info.stage);
    put(archive, "step", info.step);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    archive.save_to(path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw FormatError("checkpoint " + path.string() + " not found");
    }
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw FormatError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    const int64_t version = get(archive, "format_version").toInt();
    if (version != kCheckpointFormatVersion) {
        throw FormatError("unsupported checkpoint format version " + std::to_string(version));
    }
    LoadedCheckpoint out;
    auto& c = out.info.config;
    c.codec.latent_channels = get(archive, "latent_channels").toInt();
    c.codec.hidden_channels = get(archive, "hidden_channels").toInt();
    c.codec.hyper_channels = get(archive, "hyper_channels").toInt();
    c.codec.hyper_feature_channels = get(archive, "hyper_feature_channels").toInt();
    c.codec.temporal_feature_channels = get(archive, "temporal_feature_channels").toInt();
    c.dim = get(archive, "dim").toInt();
    c.heads = get(archive, "heads").toInt();
    c.mlp_ratio = get(archive, "mlp_ratio").toDouble();
    c.window_grid = get(archive, "window_grid").toInt();
    c.query_grid = get(archive, "query_grid").toInt();
    c.resampler_blocks = get(archive, "resampler_blocks").toInt();
    c.fusion_blocks = get(archive, "fusion_blocks").toInt();
    c.decoder_blocks = get(archive, "decoder_blocks").toInt();
    const int64_t context_path = get(archive, "context_path").toInt();
    if (context_path != 0 && context_path != 1) {
        throw FormatError("unknown context path in checkpoint");
    }
    c.context_path = static_cast<ContextPath>(context_path);
    out.info.lambda = get(archive, "lambda").toDouble();
    out.info.lambda_index = static_cast<uint32_t>(get(archive, "lambda_index").toInt());
    out.info.stage = get(archive, "stage").toInt();
    out.info.step = get(archive, "step").toInt();

    out.model = CgtModel(c);
    try {
        out.model->load(archive);
    } catch (const c10::Error& e) {
        throw FormatError("checkpoint parameters do not match the architecture: " +
                          std::string(e.what_without_backtrace()));
    }
    out.model->eval();
    return out;
}

}  // namespace cgt
