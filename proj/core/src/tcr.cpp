#include "cgt/tcr.hpp"

#include <string>

#include "cgt/errors.hpp"

namespace cgt {

TemporalContextResamplerImpl::TemporalContextResamplerImpl(const ResamplerOptions& options)
    : options_(options) {
    if (options.query_grid <= 0 || options.window_grid <= 0 ||
        options.query_grid % options.window_grid != 0) {
        throw ConfigError("query grid " + std::to_string(options.query_grid) +
                          " does not split into " + std::to_string(options.window_grid) +
                          " windows per axis");
    }
    const int64_t q = options.query_grid;
    queries_ = register_parameter(
        "queries", torch::randn({kContextTypes, q, q, options.dim}) * 0.02 +
                       position_encoding_2d(q, q, options.dim).unsqueeze(0));
    for (int64_t i = 0; i < options.blocks; ++i) {
        SwinBlockOptions block;
        block.dim = options.dim;
        block.heads = options.heads;
        block.mlp_ratio = options.mlp_ratio;
        block.shifted = i % 2 == 1;
        block.cross = true;
        block.block_index = i;
        blocks_.push_back(register_module("block" + std::to_string(i), SwinBlock(block)));
    }
}

torch::Tensor TemporalContextResamplerImpl::forward(const torch::Tensor& contexts,
                                                    std::vector<AttentionRecord>* records) {
    if (contexts.dim() != 5 || contexts.size(1) != kContextTypes ||
        contexts.size(4) != options_.dim) {
        throw DimensionError("resampler expects contexts [B, 3, h, w, " +
                             std::to_string(options_.dim) + "]");
    }
    const int64_t b = contexts.size(0);
    const int64_t q = options_.query_grid;
    const WindowSize grid{options_.window_grid, options_.window_grid};
    // Context types become batch entries so each only sees its own grid.
    auto ctx = contexts.reshape({b * kContextTypes, 1, contexts.size(2), contexts.size(3),
                                 options_.dim});
    auto x = queries_.unsqueeze(0).expand({b, kContextTypes, q, q, options_.dim})
                 .reshape({b * kContextTypes, 1, q, q, options_.dim});
    for (auto& block : blocks_) {
        auto out = block->forward(x, ctx, grid);
        if (records != nullptr && out.cross_record) {
            records->push_back(*out.cross_record);
        }
        x = out.x;
    }
    return x.view({b, kContextTypes, q, q, options_.dim});
}

ContextFusionImpl::ContextFusionImpl(const FusionOptions& options) : options_(options) {
    for (int64_t i = 0; i < options.blocks; ++i) {
        SwinBlockOptions block;
        block.dim = options.dim;
        block.heads = options.heads;
        block.mlp_ratio = options.mlp_ratio;
        block.shifted = i % 2 == 1;
        block.groups = kContextTypes;
        block.block_index = i;
        blocks_.push_back(register_module("block" + std::to_string(i), SwinBlock(block)));
    }
}

torch::Tensor ContextFusionImpl::forward(const torch::Tensor& contexts) {
    if (contexts.dim() != 5 || contexts.size(1) != kContextTypes) {
        throw DimensionError("fusion expects contexts [B, 3, h, w, d]");
    }
    const WindowSize grid{options_.window_grid, options_.window_grid};
    auto x = contexts;
    for (auto& block : blocks_) {
        x = block->forward(x, {}, grid).x;
    }
    return x;
}

}  // namespace cgt
