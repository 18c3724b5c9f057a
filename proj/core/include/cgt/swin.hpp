#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>

#include <torch/torch.h>

namespace cgt {

// Token grids are channels-last tensors. A plain grid is [B, h, w, d]; a
// stacked grid is [B, G, h, w, d] where the G grids share one spatial window
// layout and a window holds the same spatial cell from every grid.

struct WindowSize {
    int64_t h = 1;
    int64_t w = 1;

    int64_t tokens() const { return h * w; }
    bool operator==(const WindowSize&) const = default;
};

// Square-window description used by the public partition API.
struct WindowSpec {
    int64_t win = 4;
    int64_t shift = 0;
    // Side of query windows when a different grid is paired in cross-attention.
    std::optional<int64_t> query_win;

    void validate() const;
};

// Result of splitting a (stacked) grid into windows.
struct GridWindows {
    torch::Tensor tokens;  // [B * nW, G * wh * ww, d]
    // [nW, G * wh * ww] int64: g * h * w + r * w + c in the original
    // (unshifted, unpadded) grid, or -1 for a padding token.
    torch::Tensor index;
    int64_t batch = 0;
    int64_t groups = 1;
    int64_t grid_h = 0;  // padded extent
    int64_t grid_w = 0;
    WindowSize window;
    WindowSize shift;
    bool padded = false;

    int64_t windows_h() const { return grid_h / window.h; }
    int64_t windows_w() const { return grid_w / window.w; }
    int64_t window_count() const { return windows_h() * windows_w(); }
};

struct PaddedGrid {
    torch::Tensor grid;  // zero padded, [B, G, H', W', d]
    int64_t valid_h = 0;
    int64_t valid_w = 0;
};

// Right/bottom zero padding of a stacked grid to multiples of `window`, and
// to at least `min_windows` windows per axis.
PaddedGrid pad_to_windows(const torch::Tensor& grid, WindowSize window,
                          WindowSize min_windows = {0, 0});

// Cyclically shifts the grid by -shift, then cuts row-major windows.
// Throws DimensionError when the grid is not a multiple of the window.
// `valid_h`/`valid_w` mark the unpadded extent when the grid was padded.
GridWindows window_partition(const torch::Tensor& grid, WindowSize window, WindowSize shift,
                             int64_t valid_h = -1, int64_t valid_w = -1);
GridWindows window_partition(const torch::Tensor& grid, const WindowSpec& spec);

// Inverse of window_partition for `tokens` laid out like `layout.tokens`.
torch::Tensor window_merge(const GridWindows& layout, const torch::Tensor& tokens);

// Smallest window covering a grid of (h, w) with the given window counts.
WindowSize window_for(int64_t h, int64_t w, WindowSize window_grid);

// Half-window cyclic shift, 0 along axes with a single-token window.
WindowSize half_shift(WindowSize window);

// 2D sinusoidal position encoding, [h, w, d] with d divisible by 4.
torch::Tensor position_encoding_2d(int64_t h, int64_t w, int64_t d);

struct AttentionRecord {
    torch::Tensor weights;       // [B * nW, heads, Nq, Nk]
    torch::Tensor query_index;   // [nW, Nq], see GridWindows::index
    torch::Tensor key_index;     // [nW, Nk]
    int64_t head_count = 0;
    int64_t block_index = 0;
    int64_t batch = 0;
};

// Learned relative position bias as a function of the offset between window
// normalized token centres. Works for any window size, including cross
// attention between windows of different sizes.
class RelativePositionBiasImpl : public torch::nn::Module {
public:
    RelativePositionBiasImpl(int64_t heads, int64_t query_groups, int64_t key_groups,
                             int64_t hidden = 32);

    // [heads, Gq * qh * qw, Gk * kh * kw]. Reused without grad mode until
    // the parameters change.
    torch::Tensor forward(WindowSize query_window, WindowSize key_window);

private:
    struct CachedBias {
        std::array<int64_t, 4> windows{};
        std::vector<int64_t> versions;
        torch::Tensor table;
    };

    std::vector<int64_t> parameter_versions() const;

    std::vector<CachedBias> cache_;
    int64_t heads_;
    int64_t query_groups_;
    int64_t key_groups_;
    torch::nn::Linear fc1_{nullptr};
    torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(RelativePositionBias);

struct WindowAttentionOptions {
    int64_t dim = 64;
    int64_t heads = 4;
    int64_t query_groups = 1;
    int64_t key_groups = 1;
};

class WindowAttentionImpl : public torch::nn::Module {
public:
    explicit WindowAttentionImpl(const WindowAttentionOptions& options);

    // queries [Bw, Nq, d], keys_values [Bw, Nk, d]; key_valid is an optional
    // [nW, Nk] bool mask (false = padding) repeated over the batch.
    // Returns the attended tokens [Bw, Nq, d] and weights [Bw, heads, Nq, Nk].
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& queries,
                                                    const torch::Tensor& keys_values,
                                                    WindowSize query_window, WindowSize key_window,
                                                    const torch::Tensor& key_valid = {});

    torch::nn::Linear& out_proj() { return out_; }

private:
    WindowAttentionOptions options_;
    torch::nn::Linear q_{nullptr};
    torch::nn::Linear k_{nullptr};
    torch::nn::Linear v_{nullptr};
    torch::nn::Linear out_{nullptr};
    RelativePositionBias bias_{nullptr};
};
TORCH_MODULE(WindowAttention);

// Pairs window i of the query layout with window i of the key layout.
// Throws PairingError when the window grids differ.
std::pair<torch::Tensor, AttentionRecord> window_attention(WindowAttention& attention,
                                                           const GridWindows& queries,
                                                           const GridWindows& keys_values);

struct SwinBlockOptions {
    int64_t dim = 64;
    int64_t heads = 4;
    double mlp_ratio = 4.0;
    bool shifted = false;
    bool cross = false;
    int64_t groups = 1;          // stacked grids in the block input
    int64_t context_groups = 1;  // stacked grids in the cross-attention context
    int64_t block_index = 0;
};

struct BlockOutput {
    torch::Tensor x;  // same shape as the input
    AttentionRecord self_record;
    std::optional<AttentionRecord> cross_record;
};

// Pre-norm shifted-window transformer block. With cross-attention enabled it
// runs window cross-attention against the context, then window
// self-attention, then the MLP, each on a residual branch.
class SwinBlockImpl : public torch::nn::Module {
public:
    explicit SwinBlockImpl(const SwinBlockOptions& options);

    // x: [B, G, h, w, d]; ctx: [B, Gc, hc, wc, d] (required iff cross).
    // `window_grid` is the number of windows per axis shared by x and ctx.
    BlockOutput forward(const torch::Tensor& x, const torch::Tensor& ctx, WindowSize window_grid);

    const SwinBlockOptions& options() const { return options_; }
    WindowAttention& self_attention() { return self_attn_; }
    WindowAttention& cross_attention() { return cross_attn_; }

private:
    SwinBlockOptions options_;
    torch::nn::LayerNorm norm_q_{nullptr};
    torch::nn::LayerNorm norm_kv_{nullptr};
    WindowAttention cross_attn_{nullptr};
    torch::nn::LayerNorm norm1_{nullptr};
    WindowAttention self_attn_{nullptr};
    torch::nn::LayerNorm norm2_{nullptr};
    torch::nn::Linear fc1_{nullptr};
    torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(SwinBlock);

// Throws NumericError naming `what` if `t` holds NaN or Inf.
void check_finite(const torch::Tensor& t, const char* what);

}  // namespace cgt
