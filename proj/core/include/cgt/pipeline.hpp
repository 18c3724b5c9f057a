#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cgt/bitstream.hpp"
#include "cgt/model.hpp"

namespace cgt {

enum class Ordering : uint32_t { DependencyWeighted = 0, Random = 1, Checkerboard = 2 };

std::string to_string(Ordering ordering);
Ordering parse_ordering(const std::string& name);

struct CodingOptions {
    Ordering ordering = Ordering::DependencyWeighted;
    double alpha = 0.5;
    int64_t steps = 8;
    uint32_t seed = 0;  // random ordering only
    int64_t gop = 8;
};

struct FrameTrace {
    torch::Tensor latent;          // int32 [C, h, w]
    torch::Tensor hyper;           // int32 [Cz, hz, wz]
    torch::Tensor reconstruction;  // float [3, H, W] in [0, 1]
    // Row-major latent positions revealed at each step, ascending.
    std::vector<std::vector<int64_t>> order;
    // Ideal code length under the quantized tables, raw escape bits included.
    std::vector<double> segment_bits;
    double hyper_bits = 0.0;
};

struct EncodeResult {
    Bitstream stream;
    std::vector<FrameTrace> frames;
};

struct DecodeResult {
    std::vector<torch::Tensor> frames;  // float [3, H, W] in [0, 1]
    std::vector<FrameTrace> traces;
};

// Frames are [3, H, W] in [0, 1]. Every gop-th frame starts from a zeroed
// temporal context.
EncodeResult encode_video(CgtModel& model, const std::vector<torch::Tensor>& frames,
                          const CodingOptions& options, uint32_t lambda_index);

// Throws FormatError when the header disagrees with the model, before any
// symbol is decoded, and on corrupt payloads; nothing is returned then.
DecodeResult decode_video(CgtModel& model, const Bitstream& stream, int64_t gop = 8);

// Fixed unmasking orders used by the ablation, as positions per step.
std::vector<std::vector<int64_t>> random_order(int64_t h, int64_t w, int64_t steps, uint64_t seed);
// Anchors ((r + c) even) fill the first half of the steps, the rest the
// second half.
std::vector<std::vector<int64_t>> checkerboard_order(int64_t h, int64_t w, int64_t steps);

// Bits per pixel of a stream: 8 * bytes / (frames * H * W).
double bits_per_pixel(std::size_t bytes, int64_t frame_count, int64_t height, int64_t width);

}  // namespace cgt
