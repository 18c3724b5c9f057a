#include "cgt/swin.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "cgt/errors.hpp"

namespace cgt {

namespace F = torch::nn::functional;

namespace {

torch::Tensor as_stacked(const torch::Tensor& grid) {
    if (grid.dim() == 4) {
        return grid.unsqueeze(1);
    }
    if (grid.dim() != 5) {
        throw DimensionError("token grid must be [B, h, w, d] or [B, G, h, w, d], got " +
                             std::to_string(grid.dim()) + " dims");
    }
    return grid;
}

// [B, G, H, W, d] -> [B * nH * nW, G * wh * ww, d] after rolling by -shift.
torch::Tensor cut_windows(torch::Tensor t, WindowSize window, WindowSize shift) {
    if (shift.h != 0 || shift.w != 0) {
        t = torch::roll(t, {-shift.h, -shift.w}, {2, 3});
    }
    const int64_t b = t.size(0);
    const int64_t g = t.size(1);
    const int64_t nh = t.size(2) / window.h;
    const int64_t nw = t.size(3) / window.w;
    const int64_t d = t.size(4);
    return t.view({b, g, nh, window.h, nw, window.w, d})
        .permute({0, 2, 4, 1, 3, 5, 6})
        .reshape({b * nh * nw, g * window.h * window.w, d});
}

// Window layout of token indices; constant per geometry, so computed once.
torch::Tensor window_index(int64_t groups, int64_t h, int64_t w, int64_t valid_h, int64_t valid_w,
                           WindowSize window, WindowSize shift) {
    using Key = std::tuple<int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t>;
    static std::mutex mutex;
    static std::map<Key, torch::Tensor> cache;
    const Key key{groups, h, w, valid_h, valid_w, window.h, window.w, shift.h, shift.w};
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) {
        return it->second;
    }
    torch::NoGradGuard no_grad;
    auto index = torch::arange(groups * valid_h * valid_w, torch::kLong).view({1, groups, valid_h, valid_w, 1});
    if (valid_h != h || valid_w != w) {
        index = F::pad(index, F::PadFuncOptions({0, 0, 0, w - valid_w, 0, h - valid_h}).value(-1));
    }
    auto out = cut_windows(index, window, shift).squeeze(-1).contiguous();
    cache.emplace(key, out);
    return out;
}

}  // namespace

void WindowSpec::validate() const {
    if (win <= 0) {
        throw ConfigError("window side must be positive");
    }
    if (shift < 0 || shift >= win) {
        throw ConfigError("window shift must lie in [0, win)");
    }
    if (query_win && *query_win <= 0) {
        throw ConfigError("query window side must be positive");
    }
}

PaddedGrid pad_to_windows(const torch::Tensor& grid, WindowSize window, WindowSize min_windows) {
    auto stacked = as_stacked(grid);
    const int64_t h = stacked.size(2);
    const int64_t w = stacked.size(3);
    const int64_t ph = std::max((h + window.h - 1) / window.h, min_windows.h) * window.h - h;
    const int64_t pw = std::max((w + window.w - 1) / window.w, min_windows.w) * window.w - w;
    if (ph == 0 && pw == 0) {
        return {stacked, h, w};
    }
    return {F::pad(stacked, F::PadFuncOptions({0, 0, 0, pw, 0, ph})), h, w};
}

GridWindows window_partition(const torch::Tensor& grid, WindowSize window, WindowSize shift,
                             int64_t valid_h, int64_t valid_w) {
    auto t = as_stacked(grid);
    if (window.h <= 0 || window.w <= 0) {
        throw ConfigError("window extent must be positive");
    }
    if (shift.h < 0 || shift.h >= window.h || shift.w < 0 || shift.w >= window.w) {
        throw ConfigError("window shift must lie in [0, win)");
    }
    const int64_t h = t.size(2);
    const int64_t w = t.size(3);
    if (h % window.h != 0 || w % window.w != 0) {
        throw DimensionError("grid " + std::to_string(h) + "x" + std::to_string(w) +
                             " is not a multiple of window " + std::to_string(window.h) + "x" +
                             std::to_string(window.w) + "; pad first");
    }
    if (valid_h < 0) valid_h = h;
    if (valid_w < 0) valid_w = w;

    GridWindows out;
    out.batch = t.size(0);
    out.groups = t.size(1);
    out.grid_h = h;
    out.grid_w = w;
    out.window = window;
    out.shift = shift;
    out.padded = valid_h != h || valid_w != w;
    out.tokens = cut_windows(t, window, shift);
    out.index = window_index(out.groups, h, w, valid_h, valid_w, window, shift);
    return out;
}

GridWindows window_partition(const torch::Tensor& grid, const WindowSpec& spec) {
    spec.validate();
    return window_partition(grid, {spec.win, spec.win}, {spec.shift, spec.shift});
}

torch::Tensor window_merge(const GridWindows& layout, const torch::Tensor& tokens) {
    const int64_t nh = layout.windows_h();
    const int64_t nw = layout.windows_w();
    const int64_t d = tokens.size(-1);
    auto t = tokens.view({layout.batch, nh, nw, layout.groups, layout.window.h, layout.window.w, d})
                 .permute({0, 3, 1, 4, 2, 5, 6})
                 .reshape({layout.batch, layout.groups, layout.grid_h, layout.grid_w, d});
    if (layout.shift.h != 0 || layout.shift.w != 0) {
        t = torch::roll(t, {layout.shift.h, layout.shift.w}, {2, 3});
    }
    return t;
}

WindowSize window_for(int64_t h, int64_t w, WindowSize window_grid) {
    if (window_grid.h <= 0 || window_grid.w <= 0) {
        throw ConfigError("window grid must be positive");
    }
    return {(h + window_grid.h - 1) / window_grid.h, (w + window_grid.w - 1) / window_grid.w};
}

WindowSize half_shift(WindowSize window) { return {window.h / 2, window.w / 2}; }

torch::Tensor position_encoding_2d(int64_t h, int64_t w, int64_t d) {
    if (d % 4 != 0) {
        throw ConfigError("position encoding width must be divisible by 4");
    }
    using Key = std::tuple<int64_t, int64_t, int64_t>;
    static std::mutex mutex;
    static std::map<Key, torch::Tensor> cache;
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find({h, w, d}); it != cache.end()) {
        return it->second;
    }
    torch::NoGradGuard no_grad;
    const int64_t quarter = d / 4;
    auto freq = torch::exp(torch::arange(quarter, torch::kFloat) *
                           (-std::log(10000.0) / static_cast<double>(quarter)));
    auto ys = torch::arange(h, torch::kFloat).unsqueeze(1) * freq.unsqueeze(0);  // [h, q]
    auto xs = torch::arange(w, torch::kFloat).unsqueeze(1) * freq.unsqueeze(0);  // [w, q]
    auto py = torch::cat({ys.sin(), ys.cos()}, 1).unsqueeze(1).expand({h, w, 2 * quarter});
    auto px = torch::cat({xs.sin(), xs.cos()}, 1).unsqueeze(0).expand({h, w, 2 * quarter});
    auto out = torch::cat({py, px}, 2).contiguous();
    cache.emplace(Key{h, w, d}, out);
    return out;
}

RelativePositionBiasImpl::RelativePositionBiasImpl(int64_t heads, int64_t query_groups,
                                                   int64_t key_groups, int64_t hidden)
    : heads_(heads), query_groups_(query_groups), key_groups_(key_groups) {
    fc1_ = register_module("fc1", torch::nn::Linear(2, hidden));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden, heads * query_groups * key_groups));
    torch::NoGradGuard guard;
    fc2_->weight.zero_();
    fc2_->bias.zero_();
}

std::vector<int64_t> RelativePositionBiasImpl::parameter_versions() const {
    return {fc1_->weight._version(), fc1_->bias._version(), fc2_->weight._version(),
            fc2_->bias._version()};
}

torch::Tensor RelativePositionBiasImpl::forward(WindowSize query_window, WindowSize key_window) {
    const bool reuse = !torch::GradMode::is_enabled();
    const std::array<int64_t, 4> windows{query_window.h, query_window.w, key_window.h, key_window.w};
    if (reuse) {
        const auto versions = parameter_versions();
        for (const auto& c : cache_) {
            if (c.windows == windows && c.versions == versions) return c.table;
        }
    }
    const auto dtype = fc1_->weight.scalar_type();
    auto centres = [dtype](WindowSize win) {
        auto r = (torch::arange(win.h, dtype) + 0.5) / static_cast<double>(win.h);
        auto c = (torch::arange(win.w, dtype) + 0.5) / static_cast<double>(win.w);
        auto grid = torch::meshgrid({r, c}, "ij");
        return torch::stack({grid[0].reshape({-1}), grid[1].reshape({-1})}, 1);  // [n, 2]
    };
    auto q = centres(query_window);
    auto k = centres(key_window);
    const int64_t nq = q.size(0);
    const int64_t nk = k.size(0);
    auto delta = (q.unsqueeze(1) - k.unsqueeze(0)) * 4.0;  // [nq, nk, 2]
    auto out = fc2_(torch::relu(fc1_(delta)));          // [nq, nk, H * Gq * Gk]
    auto table = out.view({nq, nk, query_groups_, key_groups_, heads_})
                     .permute({4, 2, 0, 3, 1})
                     .reshape({heads_, query_groups_ * nq, key_groups_ * nk});
    if (reuse) {
        std::erase_if(cache_, [&](const CachedBias& c) { return c.windows == windows; });
        cache_.push_back({windows, parameter_versions(), table});
    }
    return table;
}

WindowAttentionImpl::WindowAttentionImpl(const WindowAttentionOptions& options)
    : options_(options) {
    if (options.dim % options.heads != 0) {
        throw ConfigError("attention width must be divisible by the head count");
    }
    q_ = register_module("q", torch::nn::Linear(options.dim, options.dim));
    k_ = register_module("k", torch::nn::Linear(options.dim, options.dim));
    v_ = register_module("v", torch::nn::Linear(options.dim, options.dim));
    out_ = register_module("out", torch::nn::Linear(options.dim, options.dim));
    bias_ = register_module(
        "bias", RelativePositionBias(options.heads, options.query_groups, options.key_groups));
}

std::pair<torch::Tensor, torch::Tensor> WindowAttentionImpl::forward(
    const torch::Tensor& queries, const torch::Tensor& keys_values, WindowSize query_window,
    WindowSize key_window, const torch::Tensor& key_valid) {
    const int64_t bw = queries.size(0);
    const int64_t nq = queries.size(1);
    const int64_t nk = keys_values.size(1);
    if (keys_values.size(0) != bw) {
        throw PairingError("query and key window batches differ: " + std::to_string(bw) + " vs " +
                           std::to_string(keys_values.size(0)));
    }
    const int64_t heads = options_.heads;
    const int64_t dh = options_.dim / heads;

    auto q = q_(queries).view({bw, nq, heads, dh}).transpose(1, 2);
    auto k = k_(keys_values).view({bw, nk, heads, dh}).transpose(1, 2);
    auto v = v_(keys_values).view({bw, nk, heads, dh}).transpose(1, 2);

    auto scores = torch::matmul(q, k.transpose(-2, -1)) * (1.0 / std::sqrt(static_cast<double>(dh)));
    scores = scores + bias_(query_window, key_window).unsqueeze(0);
    if (key_valid.defined()) {
        const int64_t nw = key_valid.size(0);
        auto invalid = key_valid.logical_not().view({1, nw, 1, 1, nk});
        scores = scores.view({bw / nw, nw, heads, nq, nk})
                     .masked_fill(invalid, -std::numeric_limits<float>::infinity())
                     .view({bw, heads, nq, nk});
    }
    auto weights = torch::softmax(scores, -1);
    if (key_valid.defined()) {
        // Windows made only of padding have no valid key.
        weights = torch::nan_to_num(weights, 0.0);
    }
    auto out = torch::matmul(weights, v).transpose(1, 2).reshape({bw, nq, options_.dim});
    return {out_(out), weights};
}

std::pair<torch::Tensor, AttentionRecord> window_attention(WindowAttention& attention,
                                                           const GridWindows& queries,
                                                           const GridWindows& keys_values) {
    if (queries.window_count() != keys_values.window_count() ||
        queries.windows_h() != keys_values.windows_h() ||
        queries.windows_w() != keys_values.windows_w() || queries.batch != keys_values.batch) {
        throw PairingError("window pairing mismatch: queries " +
                           std::to_string(queries.windows_h()) + "x" +
                           std::to_string(queries.windows_w()) + " windows, keys " +
                           std::to_string(keys_values.windows_h()) + "x" +
                           std::to_string(keys_values.windows_w()));
    }
    torch::Tensor key_valid;
    if (keys_values.padded) {
        key_valid = keys_values.index.ge(0);
    }
    auto [out, weights] = attention->forward(queries.tokens, keys_values.tokens, queries.window,
                                             keys_values.window, key_valid);
    AttentionRecord record;
    record.weights = weights;
    record.query_index = queries.index;
    record.key_index = keys_values.index;
    record.head_count = weights.size(1);
    record.batch = queries.batch;
    return {out, record};
}

SwinBlockImpl::SwinBlockImpl(const SwinBlockOptions& options) : options_(options) {
    const int64_t d = options.dim;
    if (options.cross) {
        norm_q_ = register_module("norm_q", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
        norm_kv_ = register_module("norm_kv", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
        cross_attn_ = register_module(
            "cross_attn", WindowAttention(WindowAttentionOptions{d, options.heads, options.groups,
                                                                 options.context_groups}));
    }
    norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    self_attn_ = register_module(
        "self_attn",
        WindowAttention(WindowAttentionOptions{d, options.heads, options.groups, options.groups}));
    norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    const auto hidden = static_cast<int64_t>(static_cast<double>(d) * options.mlp_ratio);
    fc1_ = register_module("fc1", torch::nn::Linear(d, hidden));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden, d));
}

BlockOutput SwinBlockImpl::forward(const torch::Tensor& input, const torch::Tensor& ctx,
                                   WindowSize window_grid) {
    const bool plain = input.dim() == 4;
    auto x = as_stacked(input);
    const int64_t h = x.size(2);
    const int64_t w = x.size(3);
    const WindowSize win = window_for(h, w, window_grid);
    const WindowSize shift = options_.shifted ? half_shift(win) : WindowSize{0, 0};

    auto attend = [&](WindowAttention& attn, const torch::Tensor& queries,
                      const torch::Tensor& keys, WindowSize kwin, WindowSize kshift,
                      bool self) -> std::pair<torch::Tensor, AttentionRecord> {
        auto qp = pad_to_windows(queries, win, window_grid);
        auto qwin = window_partition(qp.grid, win, shift, qp.valid_h, qp.valid_w);
        GridWindows kwins;
        if (self) {
            kwins = qwin;
        } else {
            auto kp = pad_to_windows(keys, kwin, window_grid);
            kwins = window_partition(kp.grid, kwin, kshift, kp.valid_h, kp.valid_w);
        }
        auto [out, record] = window_attention(attn, qwin, kwins);
        record.block_index = options_.block_index;
        auto merged = window_merge(qwin, out);
        if (qp.valid_h != qwin.grid_h || qp.valid_w != qwin.grid_w) {
            merged = merged.narrow(2, 0, h).narrow(3, 0, w);
        }
        return {merged, record};
    };

    BlockOutput result;
    if (options_.cross) {
        if (!ctx.defined()) {
            throw ConfigError("cross-attention block called without context");
        }
        auto c = as_stacked(ctx);
        const WindowSize cwin = window_for(c.size(2), c.size(3), window_grid);
        const WindowSize cshift = options_.shifted ? half_shift(cwin) : WindowSize{0, 0};
        auto [delta, record] = attend(cross_attn_, norm_q_(x), norm_kv_(c), cwin, cshift, false);
        x = x + delta;
        result.cross_record = record;
    }
    auto [delta, record] = attend(self_attn_, norm1_(x), {}, win, shift, true);
    x = x + delta;
    result.self_record = record;
    x = x + fc2_(torch::gelu(fc1_(norm2_(x))));
    check_finite(x, "swin block output");
    result.x = plain ? x.squeeze(1) : x;
    return result;
}

void check_finite(const torch::Tensor& t, const char* what) {
    if (!torch::isfinite(t).all().item<bool>()) {
        throw NumericError(std::string("non-finite values in ") + what);
    }
}

}  // namespace cgt
