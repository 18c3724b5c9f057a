#include "cgt/bitstream.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <string>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
}

void put_payload(std::vector<uint8_t>& out, const std::vector<uint8_t>& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
}

class Reader {
public:
    explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

    uint8_t u8() {
        need(1, "byte");
        return bytes_[pos_++];
    }

    uint32_t u32() {
        need(4, "32-bit field");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::vector<uint8_t> payload() {
        const uint32_t n = u32();
        need(n, "payload");
        std::vector<uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("bitstream truncated while reading ") + what, pos_);
        }
    }

    std::span<const uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> Bitstream::serialize() const {
    std::vector<uint8_t> out;
    out.reserve(byte_size());
    out.insert(out.end(), kBitstreamMagic.begin(), kBitstreamMagic.end());
    out.push_back(header.version);
    for (uint32_t v : {header.frame_h, header.frame_w, header.latent_h, header.latent_w,
                       header.latent_c, header.lambda_index, header.decode_steps,
                       header.frame_count, header.ordering, header.alpha_bits,
                       header.order_seed}) {
        put_u32(out, v);
    }
    for (const auto& frame : frames) {
        put_payload(out, frame.hyper);
        for (const auto& segment : frame.segments) {
            put_payload(out, segment);
        }
    }
    return out;
}

Bitstream Bitstream::parse(std::span<const uint8_t> bytes) {
    Reader in(bytes);
    for (char c : kBitstreamMagic) {
        if (in.u8() != static_cast<uint8_t>(c)) {
            throw FormatError("bad bitstream magic", 0);
        }
    }
    Bitstream stream;
    auto& h = stream.header;
    h.version = in.u8();
    if (h.version != kBitstreamVersion) {
        throw FormatError("unsupported bitstream version " + std::to_string(h.version), 4);
    }
    h.frame_h = in.u32();
    h.frame_w = in.u32();
    h.latent_h = in.u32();
    h.latent_w = in.u32();
    h.latent_c = in.u32();
    h.lambda_index = in.u32();
    h.decode_steps = in.u32();
    h.frame_count = in.u32();
    h.ordering = in.u32();
    h.alpha_bits = in.u32();
    h.order_seed = in.u32();
    if (h.decode_steps == 0) {
        throw FormatError("bitstream declares zero decoding steps", 29);
    }
    // Each frame needs at least (1 + steps) length fields.
    const std::size_t min_frame_bytes = 4ull * (1ull + h.decode_steps);
    if (h.frame_count > bytes.size() / min_frame_bytes + 1) {
        throw FormatError("frame count exceeds stream size", 33);
    }
    stream.frames.resize(h.frame_count);
    for (auto& frame : stream.frames) {
        frame.hyper = in.payload();
        frame.segments.resize(h.decode_steps);
        for (auto& segment : frame.segments) {
            segment = in.payload();
        }
    }
    if (!in.done()) {
        throw FormatError("trailing bytes after last frame", in.pos());
    }
    return stream;
}

std::size_t Bitstream::byte_size() const {
    std::size_t n = kBitstreamHeaderBytes;
    for (const auto& frame : frames) {
        n += 4 + frame.hyper.size();
        for (const auto& segment : frame.segments) {
            n += 4 + segment.size();
        }
    }
    return n;
}

std::size_t Bitstream::framing_bytes() const {
    std::size_t n = kBitstreamHeaderBytes;
    for (const auto& frame : frames) {
        n += 4 * (1 + frame.segments.size());
    }
    return n;
}

void Bitstream::write_file(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("failed writing " + path.string());
    }
}

Bitstream Bitstream::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(bytes);
}

}  // namespace cgt
