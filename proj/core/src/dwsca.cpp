#include "cgt/dwsca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

using torch::autograd::AutogradContext;
using torch::autograd::tensor_list;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Offset theta with sum_i sigmoid(z_i + theta) = k, by bisection.
double solve_offset(const std::vector<double>& z, int64_t k) {
    const auto [zmin, zmax] = std::minmax_element(z.begin(), z.end());
    const double margin = std::log(static_cast<double>(z.size())) + 2.0;
    double lo = -*zmax - margin;
    double hi = -*zmin + margin;
    const double target = static_cast<double>(k);
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        double sum = 0.0;
        for (double v : z) sum += logistic(v + mid);
        (sum < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

class SoftTopK : public torch::autograd::Function<SoftTopK> {
public:
    static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& scores, int64_t k,
                                 double temperature) {
        auto z = (scores.detach().to(torch::kDouble) / temperature).contiguous();
        std::vector<double> values(z.data_ptr<double>(), z.data_ptr<double>() + z.numel());
        const double theta = solve_offset(values, k);
        auto gamma = torch::sigmoid(z + theta);
        ctx->save_for_backward({gamma});
        ctx->saved_data["temperature"] = temperature;
        return gamma.to(scores.scalar_type());
    }

    static tensor_list backward(AutogradContext* ctx, tensor_list grad_outputs) {
        const auto gamma = ctx->get_saved_variables()[0];
        const double temperature = ctx->saved_data["temperature"].toDouble();
        auto g = grad_outputs[0].to(torch::kDouble);
        auto slope = gamma * (1.0 - gamma);
        const double total = slope.sum().item<double>();
        auto grad = g * slope;
        if (total > 1e-300) {
            grad = grad - slope * (grad.sum() / total);
        }
        return {(grad / temperature).to(grad_outputs[0].scalar_type()), torch::Tensor(),
                torch::Tensor()};
    }
};

}  // namespace

int64_t masked_count(int64_t n, double ratio) {
    return std::min<int64_t>(n, static_cast<int64_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9)));
}

torch::Tensor random_mask(int64_t h, int64_t w, double ratio, uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw ConfigError("mask ratio must lie in (0, 1], got " + std::to_string(ratio));
    }
    const int64_t n = h * w;
    std::vector<int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), int64_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    auto mask = torch::zeros({n}, torch::kBool);
    auto acc = mask.accessor<bool, 1>();
    const int64_t m = masked_count(n, ratio);
    for (int64_t i = 0; i < m; ++i) {
        acc[order[static_cast<std::size_t>(i)]] = true;
    }
    return mask.view({h, w});
}

SpatialDecoderImpl::SpatialDecoderImpl(const DecoderOptions& options) : options_(options) {
    embed_ = register_module("embed", torch::nn::Linear(options.latent_channels, options.dim));
    mask_token_ = register_parameter("mask_token", torch::randn({options.dim}) * 0.02);
    for (int64_t i = 0; i < options.blocks; ++i) {
        SwinBlockOptions block;
        block.dim = options.dim;
        block.heads = options.heads;
        block.mlp_ratio = options.mlp_ratio;
        block.shifted = i % 2 == 1;
        block.cross = true;
        block.context_groups = options.context_groups;
        block.block_index = i;
        blocks_.push_back(register_module("block" + std::to_string(i), SwinBlock(block)));
    }
    project_ = register_module("project",
                               torch::nn::Linear(options.dim, 2 * options.latent_channels));
}

torch::Tensor SpatialDecoderImpl::embed(const torch::Tensor& latent, const torch::Tensor& reveal) {
    if (latent.dim() != 4 || latent.size(3) != options_.latent_channels) {
        throw DimensionError("decoder latent must be [B, h, w, " +
                             std::to_string(options_.latent_channels) + "]");
    }
    if (reveal.sizes() != latent.sizes().slice(0, 3)) {
        throw DimensionError("reveal weights must be [B, h, w]");
    }
    auto r = reveal.unsqueeze(-1);
    auto tokens = mask_token_ + r * (embed_(latent) - mask_token_);
    return tokens + position_encoding_2d(latent.size(1), latent.size(2), options_.dim);
}

DecoderOutput SpatialDecoderImpl::forward(const torch::Tensor& latent, const torch::Tensor& reveal,
                                          const torch::Tensor& fused) {
    const WindowSize grid{options_.window_grid, options_.window_grid};
    auto x = embed(latent, reveal).unsqueeze(1);
    DecoderOutput out;
    for (auto& block : blocks_) {
        auto result = block->forward(x, fused, grid);
        x = result.x;
        out.record = result.self_record;
    }
    out.features = x.squeeze(1);
    out.params = project(out.features);
    return out;
}

GaussianParams SpatialDecoderImpl::project(const torch::Tensor& features) {
    auto parts = project_(features).chunk(2, -1);
    return {parts[0], positive_scale(parts[1])};
}

torch::Tensor minmax_normalize(const torch::Tensor& values, const torch::Tensor& mask) {
    const double inf = std::numeric_limits<double>::infinity();
    auto hi = values.masked_fill(mask.logical_not(), -inf).amax(1, true);
    auto lo = values.masked_fill(mask.logical_not(), inf).amin(1, true);
    auto count = mask.sum(1, true);
    auto range = hi - lo;
    auto spread = range.gt(0);
    auto safe_range = torch::where(spread, range, torch::ones_like(range));
    auto safe_lo = torch::where(count.gt(0), lo, torch::zeros_like(lo));
    auto normalized = torch::where(spread, (values - safe_lo) / safe_range, torch::zeros_like(values));
    normalized = torch::where(count.eq(1), torch::ones_like(values), normalized);
    return torch::where(mask, normalized, torch::zeros_like(values));
}

torch::Tensor attention_map(const AttentionRecord& record, const torch::Tensor& mask) {
    if (mask.dim() != 3) {
        throw DimensionError("mask must be [B, h, w]");
    }
    const int64_t b = mask.size(0);
    const int64_t n = mask.size(1) * mask.size(2);
    const int64_t windows = record.query_index.size(0);
    const int64_t nq = record.query_index.size(1);
    const int64_t nk = record.key_index.size(1);
    if (record.batch != b || record.weights.size(0) != b * windows) {
        throw DimensionError("attention record does not match the mask batch");
    }
    auto weights = record.weights.view({b, windows, record.head_count, nq, nk}).mean(2);
    auto flat = mask.reshape({b, n}).to(weights.scalar_type());
    auto qidx = record.query_index.reshape({-1});
    auto qmask = flat.index_select(1, qidx.clamp_min(0)).view({b, windows, nq}) *
                 record.query_index.ge(0).to(weights.scalar_type()).unsqueeze(0);
    auto received = (weights * qmask.unsqueeze(-1)).sum(2);  // [b, windows, nk]
    // Padding keys land in a spill slot at index n.
    auto kidx = torch::where(record.key_index.ge(0), record.key_index,
                             torch::full_like(record.key_index, n))
                    .reshape({1, -1})
                    .expand({b, windows * nk});
    auto raw = torch::zeros({b, n + 1}, weights.options())
                   .scatter_add(1, kidx, received.reshape({b, windows * nk}))
                   .narrow(1, 0, n);
    return minmax_normalize(raw, mask.reshape({b, n})).view(mask.sizes());
}

torch::Tensor entropy_map(const torch::Tensor& sigma, const torch::Tensor& mask) {
    const int64_t b = mask.size(0);
    auto entropy = torch::log(sigma).sum(-1).reshape({b, -1});
    return minmax_normalize(-entropy, mask.reshape({b, -1})).view(mask.sizes());
}

torch::Tensor dependency_score(const torch::Tensor& attention, const torch::Tensor& certainty,
                               double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [0, 1]");
    }
    return certainty * alpha + attention * (1.0 - alpha);
}

torch::Tensor soft_topk(const torch::Tensor& scores, int64_t k, double temperature) {
    if (scores.dim() != 1) {
        throw DimensionError("soft top-k expects a 1-D score vector");
    }
    const int64_t n = scores.size(0);
    if (k < 1 || k > n) {
        throw ConfigError("soft top-k needs 1 <= k <= n (k=" + std::to_string(k) +
                          ", n=" + std::to_string(n) + ")");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("soft top-k temperature must be positive");
    }
    if (!torch::isfinite(scores).all().item<bool>()) {
        throw NumericError("non-finite scores in soft top-k");
    }
    if (k == n) {
        return torch::ones_like(scores);
    }
    return SoftTopK::apply(scores, k, temperature);
}

std::vector<int64_t> hard_topk(std::span<const double> scores, int64_t k) {
    const auto n = static_cast<int64_t>(scores.size());
    if (k < 0 || k > n) {
        throw ConfigError("hard top-k needs 0 <= k <= n");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) throw NumericError("non-finite score in hard top-k");
    }
    std::vector<int64_t> order(scores.size());
    std::iota(order.begin(), order.end(), int64_t{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int64_t a, int64_t b) {
        const double sa = scores[static_cast<std::size_t>(a)];
        const double sb = scores[static_cast<std::size_t>(b)];
        return sa > sb || (sa == sb && a < b);
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

torch::Tensor score_positions(const DecoderOutput& output, const torch::Tensor& mask, double alpha) {
    auto a = attention_map(output.record, mask);
    auto h = entropy_map(output.params.sigma, mask);
    return dependency_score(a, h, alpha);
}

SelectionResult teacher_select_and_unmask(SpatialDecoder& decoder, const torch::Tensor& latent,
                                          const torch::Tensor& mask, const torch::Tensor& fused,
                                          double alpha, int64_t k, double temperature,
                                          SelectMode mode) {
    if (mask.dim() != 3 || mask.scalar_type() != torch::kBool) {
        throw DimensionError("mask must be a [B, h, w] bool tensor");
    }
    const int64_t b = mask.size(0);
    const int64_t n = mask.size(1) * mask.size(2);
    auto previous = mask.logical_not().to(latent.scalar_type());

    SelectionResult result;
    result.teacher = decoder->forward(latent, previous, fused);
    result.score = score_positions(result.teacher, mask, alpha);

    auto flat_mask = mask.reshape({b, n});
    auto flat_score = result.score.reshape({b, n});
    std::vector<torch::Tensor> fresh_rows;
    std::vector<torch::Tensor> gamma_rows;
    auto new_mask = flat_mask.clone();
    for (int64_t i = 0; i < b; ++i) {
        auto idx = flat_mask[i].nonzero().view({-1});
        const int64_t masked = idx.size(0);
        auto fresh_row = torch::zeros({n}, latent.options());
        auto gamma_row = torch::zeros({n}, latent.options());
        std::vector<int64_t> picked;
        if (masked > 0 && k > 0) {
            const int64_t count = std::min(k, masked);
            auto row = flat_score[i].index_select(0, idx);
            auto row_d = row.detach().to(torch::kDouble).contiguous();
            const auto local = hard_topk(
                std::span<const double>(row_d.data_ptr<double>(), static_cast<std::size_t>(masked)),
                count);
            auto local_t = torch::tensor(local, torch::kLong);
            auto global = idx.index_select(0, local_t);
            auto hard = torch::zeros({masked}, latent.options()).index_fill(0, local_t, 1.0);
            if (mode == SelectMode::Train) {
                auto gamma = soft_topk(row, count, temperature);
                fresh_row = fresh_row.index_put({idx}, hard + gamma - gamma.detach());
                gamma_row = gamma_row.index_put({idx}, gamma);
            } else {
                fresh_row = fresh_row.index_put({idx}, hard);
            }
            new_mask[i].index_fill_(0, global, false);
            auto acc = global.accessor<int64_t, 1>();
            for (int64_t j = 0; j < acc.size(0); ++j) picked.push_back(acc[j]);
        }
        fresh_rows.push_back(fresh_row);
        gamma_rows.push_back(gamma_row);
        result.selected.push_back(std::move(picked));
    }
    result.mask = new_mask.view(mask.sizes());
    result.reveal = previous + torch::stack(fresh_rows).view(mask.sizes());
    if (mode == SelectMode::Train) {
        result.gamma = torch::stack(gamma_rows).view(mask.sizes());
    }
    return result;
}

}  // namespace cgt
