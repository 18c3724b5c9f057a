#include "cgt/image_io.hpp"

#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "cgt/errors.hpp"

namespace cgt {

torch::Tensor read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
        throw FormatError("cannot read " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    const int64_t h = image.height;
    const int64_t w = image.width;
    std::vector<png_byte> pixels(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr) == 0) {
        const std::string message = image.message;
        png_image_free(&image);
        throw FormatError("cannot decode " + path.string() + ": " + message);
    }
    auto hwc = torch::from_blob(pixels.data(), {h, w, 3}, torch::kUInt8);
    return hwc.permute({2, 0, 1}).contiguous();
}

void write_png(const std::filesystem::path& path, const torch::Tensor& rgb) {
    if (rgb.dim() != 3 || rgb.size(0) != 3 || rgb.scalar_type() != torch::kUInt8) {
        throw DimensionError("PNG output must be a uint8 [3, H, W] tensor");
    }
    auto hwc = rgb.permute({1, 2, 0}).contiguous();
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(rgb.size(2));
    image.height = static_cast<png_uint_32>(rgb.size(1));
    image.format = PNG_FORMAT_RGB;
    if (png_image_write_to_file(&image, path.c_str(), 0, hwc.data_ptr<uint8_t>(), 0, nullptr) == 0) {
        throw FormatError("cannot write " + path.string() + ": " + image.message);
    }
}

torch::Tensor to_bytes(const torch::Tensor& frame) {
    return torch::round(frame.clamp(0.0, 1.0) * 255.0).to(torch::kUInt8);
}

torch::Tensor to_unit(const torch::Tensor& bytes) { return bytes.to(torch::kFloat) / 255.0; }

}  // namespace cgt
