#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace cgt {

struct SyntheticClipSpec {
    uint64_t seed = 0;
    int64_t frames = 8;
    int64_t size = 64;
    int64_t objects = 4;
    int64_t max_velocity = 3;  // pixels per frame along each axis
};

struct SyntheticObject {
    bool ellipse = false;
    int64_t x = 0;  // top-left corner at frame 0
    int64_t y = 0;
    int64_t width = 1;
    int64_t height = 1;
    int64_t vx = 0;
    int64_t vy = 0;
    std::array<uint8_t, 3> color{};
};

struct SceneLayout {
    std::array<uint8_t, 3> top{};     // background gradient end points
    std::array<uint8_t, 3> bottom{};
    std::vector<SyntheticObject> objects;  // drawn in order
};

// Scene drawn from the seed. Objects wrap around the frame borders.
SceneLayout scene_layout(const SyntheticClipSpec& spec);

// Top-left corner of `object` at frame t, modulo the frame size.
std::pair<int64_t, int64_t> object_position(const SyntheticObject& object, int64_t t, int64_t size);

// uint8 [3, size, size]
torch::Tensor render_frame(const SceneLayout& scene, int64_t size, int64_t t);
// float [frames, 3, size, size] in [0, 1], exactly representable in 8 bits.
torch::Tensor render_clip(const SyntheticClipSpec& spec);

// Writes frame_NNN.png files and manifest.json into dir.
void write_clip(const std::filesystem::path& dir, const SyntheticClipSpec& spec);

// Reads a directory written by write_clip (or any manifest listing PNG
// frames). Returns float frames [3, H, W]. Throws FormatError.
std::vector<torch::Tensor> read_clip(const std::filesystem::path& dir);
void write_frames(const std::filesystem::path& dir, const std::vector<torch::Tensor>& frames);

}  // namespace cgt
