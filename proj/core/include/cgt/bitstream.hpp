#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cgt {

inline constexpr std::array<char, 4> kBitstreamMagic{'C', 'G', 'T', '1'};
inline constexpr uint8_t kBitstreamVersion = 1;
// magic, version byte, eleven 32-bit fields
inline constexpr std::size_t kBitstreamHeaderBytes = 4 + 1 + 11 * 4;

struct BitstreamHeader {
    uint8_t version = kBitstreamVersion;
    uint32_t frame_h = 0;
    uint32_t frame_w = 0;
    uint32_t latent_h = 0;
    uint32_t latent_w = 0;
    uint32_t latent_c = 0;
    uint32_t lambda_index = 0;
    uint32_t decode_steps = 0;
    uint32_t frame_count = 0;
    // Unmasking order used by the encoder (see Ordering), the score mixing
    // weight as IEEE-754 binary32 bits, and the seed of the random order.
    uint32_t ordering = 0;
    uint32_t alpha_bits = 0;
    uint32_t order_seed = 0;

    bool operator==(const BitstreamHeader&) const = default;
};

// One frame: the hyper-latent payload, then one payload per decoding step.
// Each payload is an independently flushed range-coder stream.
struct FrameChunk {
    std::vector<uint8_t> hyper;
    std::vector<std::vector<uint8_t>> segments;
};

// Container layout (all integers little-endian):
//   "CGT1" | version u8 | frame_h frame_w latent_h latent_w latent_c
//   lambda_index decode_steps frame_count ordering alpha_bits order_seed
//   (u32 each)
//   per frame: u32 length + hyper bytes, then decode_steps x (u32 length + bytes)
struct Bitstream {
    BitstreamHeader header;
    std::vector<FrameChunk> frames;

    std::vector<uint8_t> serialize() const;
    // Throws FormatError on bad magic, unsupported version, truncation or
    // trailing bytes; nothing is returned for partially parsed input.
    static Bitstream parse(std::span<const uint8_t> bytes);

    std::size_t byte_size() const;
    // Bytes spent on the header and the per-payload length fields.
    std::size_t framing_bytes() const;

    void write_file(const std::filesystem::path& path) const;
    static Bitstream read_file(const std::filesystem::path& path);
};

}  // namespace cgt
