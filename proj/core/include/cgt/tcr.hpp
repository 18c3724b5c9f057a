#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "cgt/swin.hpp"

namespace cgt {

// Context grids in fixed order: previous latent, hyperprior, temporal prior.
inline constexpr int64_t kContextTypes = 3;

struct ResamplerOptions {
    int64_t dim = 64;
    int64_t heads = 4;
    double mlp_ratio = 4.0;
    int64_t query_grid = 8;   // query tokens per axis and context type
    int64_t window_grid = 4;  // windows per axis, shared with the context
    int64_t blocks = 1;
};

// Compresses each context grid to query_grid^2 tokens. Query window i
// cross-attends to context window i only, then the queries run windowed
// self-attention and an MLP. All context types share the blocks but own
// their queries.
class TemporalContextResamplerImpl : public torch::nn::Module {
public:
    // Throws ConfigError if the query grid does not split into window_grid^2
    // windows.
    explicit TemporalContextResamplerImpl(const ResamplerOptions& options);

    // contexts [B, 3, h, w, d] -> [B, 3, query_grid, query_grid, d]. When
    // `records` is given it receives the cross-attention record of every block.
    torch::Tensor forward(const torch::Tensor& contexts,
                          std::vector<AttentionRecord>* records = nullptr);

    int64_t query_count() const { return options_.query_grid * options_.query_grid; }
    const ResamplerOptions& options() const { return options_; }
    torch::Tensor& queries() { return queries_; }

private:
    ResamplerOptions options_;
    torch::Tensor queries_;  // [3, q, q, d]
    std::vector<SwinBlock> blocks_;
};
TORCH_MODULE(TemporalContextResampler);

struct FusionOptions {
    int64_t dim = 64;
    int64_t heads = 4;
    double mlp_ratio = 4.0;
    int64_t window_grid = 4;
    int64_t blocks = 2;
};

// Shifted-window self-attention encoder over the stacked context grids. A
// window holds the same spatial cell of all three grids.
class ContextFusionImpl : public torch::nn::Module {
public:
    explicit ContextFusionImpl(const FusionOptions& options);

    // [B, 3, h, w, d] -> [B, 3, h, w, d]
    torch::Tensor forward(const torch::Tensor& contexts);

private:
    FusionOptions options_;
    std::vector<SwinBlock> blocks_;
};
TORCH_MODULE(ContextFusion);

}  // namespace cgt
