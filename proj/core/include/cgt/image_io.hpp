#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace cgt {

// 8-bit RGB PNG <-> uint8 [3, H, W]. Throw FormatError on I/O or decode
// failures.
torch::Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const torch::Tensor& rgb);

// float [3, H, W] in [0, 1] <-> uint8, rounding half to even.
torch::Tensor to_bytes(const torch::Tensor& frame);
torch::Tensor to_unit(const torch::Tensor& bytes);

}  // namespace cgt
