#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "cgt/gaussian.hpp"
#include "cgt/swin.hpp"

namespace cgt {

// Number of positions masked for a given ratio: ceil(ratio * n).
int64_t masked_count(int64_t n, double ratio);

// Bool [h, w], true = masked. Exactly masked_count(h * w, ratio) positions,
// uniformly at random for the seed. Throws ConfigError unless 0 < ratio <= 1.
torch::Tensor random_mask(int64_t h, int64_t w, double ratio, uint64_t seed);

struct DecoderOptions {
    int64_t latent_channels = 32;
    int64_t dim = 64;
    int64_t heads = 4;
    double mlp_ratio = 4.0;
    int64_t blocks = 4;
    int64_t context_groups = 3;
    int64_t window_grid = 4;
};

struct DecoderOutput {
    torch::Tensor features;  // [B, h, w, d]
    GaussianParams params;   // [B, h, w, C]
    AttentionRecord record;  // self-attention of the final block
};

// The masked transformer decoder. Teacher and student are this one module
// called twice; there is no second parameter set.
class SpatialDecoderImpl : public torch::nn::Module {
public:
    explicit SpatialDecoderImpl(const DecoderOptions& options);

    // latent [B, h, w, C] quantized values; reveal [B, h, w] in [0, 1].
    // Token = mask + reveal * (embed(latent) - mask), plus position encoding.
    torch::Tensor embed(const torch::Tensor& latent, const torch::Tensor& reveal);
    // fused [B, 3, gh, gw, d] from the context path.
    DecoderOutput forward(const torch::Tensor& latent, const torch::Tensor& reveal,
                          const torch::Tensor& fused);
    GaussianParams project(const torch::Tensor& features);

    torch::Tensor& mask_token() { return mask_token_; }
    const DecoderOptions& options() const { return options_; }

private:
    DecoderOptions options_;
    torch::nn::Linear embed_{nullptr};
    torch::Tensor mask_token_;
    std::vector<SwinBlock> blocks_;
    torch::nn::Linear project_{nullptr};
};
TORCH_MODULE(SpatialDecoder);

// Per-row min-max normalization over the entries where `mask` is true;
// values [B, n], mask [B, n] bool. Unmasked entries are 0. A row with one
// masked entry gets 1 there; a row whose masked entries are all equal gets 0.
torch::Tensor minmax_normalize(const torch::Tensor& values, const torch::Tensor& mask);

// Attention mass each masked position receives from the masked queries of
// its window, head averaged, normalized over masked positions. mask is
// [B, h, w] bool (true = masked); returns [B, h, w].
torch::Tensor attention_map(const AttentionRecord& record, const torch::Tensor& mask);

// Certainty from sum_c log sigma: lowest sum -> 1. sigma [B, h, w, C].
torch::Tensor entropy_map(const torch::Tensor& sigma, const torch::Tensor& mask);

// alpha * certainty + (1 - alpha) * attention.
torch::Tensor dependency_score(const torch::Tensor& attention, const torch::Tensor& certainty,
                               double alpha);

// Differentiable relaxation of top-k over a 1-D score vector:
// gamma_i = sigmoid(s_i / temperature + theta), with theta solved so that
// sum(gamma) = k. Gradients use the implicit function theorem.
// Throws ConfigError unless 1 <= k <= n and temperature > 0; NumericError
// for non-finite scores.
torch::Tensor soft_topk(const torch::Tensor& scores, int64_t k, double temperature);

// Indices of the k largest scores, ties to the smaller index, ascending.
std::vector<int64_t> hard_topk(std::span<const double> scores, int64_t k);

enum class SelectMode { Train, Infer };

struct SelectionResult {
    torch::Tensor mask;    // [B, h, w] bool, the still masked positions
    // [B, h, w]: 1 where revealed before, the (straight-through) selection
    // weight at newly chosen positions, 0 elsewhere.
    torch::Tensor reveal;
    torch::Tensor gamma;   // [B, h, w] soft weights on the old masked set (train only)
    torch::Tensor score;   // [B, h, w], 0 off the old masked set
    std::vector<std::vector<int64_t>> selected;  // row-major indices, ascending
    DecoderOutput teacher;
};

// Runs the decoder on the current partial latent, scores the masked
// positions, and unmasks the k best per batch entry (k is clamped to the
// masked count). In Train mode the reveal weights are hard in the forward
// pass and carry the soft top-k gradient. The caller writes the symbols of
// the selected positions into the latent.
SelectionResult teacher_select_and_unmask(SpatialDecoder& decoder, const torch::Tensor& latent,
                                          const torch::Tensor& mask, const torch::Tensor& fused,
                                          double alpha, int64_t k, double temperature,
                                          SelectMode mode);

// Score maps of a decoder output over the masked set.
torch::Tensor score_positions(const DecoderOutput& output, const torch::Tensor& mask, double alpha);

}  // namespace cgt
