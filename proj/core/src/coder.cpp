#include "cgt/coder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

constexpr uint32_t kTop = 1u << 24;
constexpr uint64_t kCarry = 1ull << 32;

double upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

std::size_t escape_high(SymbolSupport support) { return support.entries() - 1; }

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::vector<double> discretized_gaussian_pmf(double mu, double sigma, SymbolSupport support) {
    if (!std::isfinite(mu) || !std::isfinite(sigma)) {
        throw NumericError("non-finite Gaussian parameters");
    }
    if (support.size() < 1) {
        throw ConfigError("empty symbol support");
    }
    sigma = std::max(sigma, kSigmaMin);

    // Edge j sits at min - 0.5 + j. Below the mean the lower tail is accurate,
    // above it the upper tail, so each edge stores whichever is small.
    const std::size_t edges = static_cast<std::size_t>(support.size()) + 1;
    std::vector<double> x(edges);
    std::vector<double> tail(edges);
    for (std::size_t j = 0; j < edges; ++j) {
        x[j] = (static_cast<double>(support.min) - 0.5 + static_cast<double>(j) - mu) / sigma;
        tail[j] = x[j] < 0.0 ? normal_cdf(x[j]) : upper_tail(x[j]);
    }
    auto cdf = [&](std::size_t j) { return x[j] < 0.0 ? tail[j] : 1.0 - tail[j]; };

    std::vector<double> pmf(support.entries());
    pmf.front() = cdf(0);
    for (std::size_t j = 0; j + 1 < edges; ++j) {
        double p;
        if (x[j] >= 0.0) {
            p = tail[j] - tail[j + 1];
        } else if (x[j + 1] < 0.0) {
            p = tail[j + 1] - tail[j];
        } else {
            p = 1.0 - tail[j] - tail[j + 1];
        }
        pmf[j + 1] = std::max(p, 0.0);
    }
    pmf.back() = x.back() < 0.0 ? 1.0 - tail.back() : tail.back();
    return pmf;
}

SymbolPMF quantize_cdf(std::span<const double> pmf, int precision) {
    if (precision < 1 || precision > 24) {
        throw ConfigError("probability precision must lie in [1, 24]");
    }
    const uint64_t total = 1ull << precision;
    if (pmf.size() < 2) {
        throw ConfigError("pmf needs at least two entries");
    }
    if (pmf.size() > total) {
        throw ConfigError("support of " + std::to_string(pmf.size()) + " entries exceeds 2^" +
                          std::to_string(precision));
    }
    double mass = 0.0;
    for (double p : pmf) {
        if (!std::isfinite(p) || p < 0.0) {
            throw NumericError("pmf entries must be finite and non-negative");
        }
        mass += p;
    }
    if (std::abs(mass - 1.0) > 1e-6) {
        throw ConfigError("pmf does not sum to one (sum = " + std::to_string(mass) + ")");
    }

    std::vector<int64_t> freq(pmf.size());
    int64_t assigned = 0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
        freq[i] = std::max<int64_t>(1, std::llround(pmf[i] * static_cast<double>(total)));
        assigned += freq[i];
    }
    int64_t residue = static_cast<int64_t>(total) - assigned;
    const auto largest = static_cast<std::size_t>(
        std::distance(pmf.begin(), std::max_element(pmf.begin(), pmf.end())));
    if (freq[largest] + residue >= 1) {
        freq[largest] += residue;
    } else {
        // Near-uniform tables over huge supports: take the deficit from the
        // biggest frequencies first.
        std::vector<std::size_t> order(freq.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
        for (std::size_t i : order) {
            if (residue == 0) break;
            const int64_t take = std::min(freq[i] - 1, -residue);
            freq[i] -= take;
            residue += take;
        }
    }

    SymbolPMF table;
    table.precision = precision;
    table.cdf.resize(pmf.size() + 1);
    table.cdf[0] = 0;
    for (std::size_t i = 0; i < freq.size(); ++i) {
        table.cdf[i + 1] = table.cdf[i] + static_cast<uint32_t>(freq[i]);
    }
    return table;
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq, int total_bits) {
    const uint32_t r = range_ >> total_bits;
    low_ += static_cast<uint64_t>(r) * cum;
    range_ = r * freq;
    if (low_ >= kCarry) {
        propagate_carry();
        low_ -= kCarry;
    }
    while (range_ < kTop) {
        out_.push_back(static_cast<uint8_t>(low_ >> 24));
        low_ = (low_ << 8) & 0xFFFFFFFFull;
        range_ <<= 8;
    }
}

void RangeEncoder::encode_bits(uint32_t value, int bits) { encode(value, 1, bits); }

void RangeEncoder::encode_entry(const SymbolPMF& table, std::size_t entry) {
    encode(table.cdf[entry], table.frequency(entry), table.precision);
}

void RangeEncoder::propagate_carry() {
    for (auto it = out_.rbegin(); it != out_.rend(); ++it) {
        if (*it != 0xFF) {
            ++*it;
            return;
        }
        *it = 0;
    }
    throw Error("range coder carry overflow");
}

std::vector<uint8_t> RangeEncoder::finish() {
    // Any value in [low, low + range) identifies the stream; with range >= 2^24
    // a multiple of 2^24 exists there, so a single byte suffices.
    uint64_t value = (low_ + (kTop - 1)) & ~static_cast<uint64_t>(kTop - 1);
    if (value >= kCarry) {
        propagate_carry();
        value -= kCarry;
    }
    out_.push_back(static_cast<uint8_t>(value >> 24));
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
    for (int i = 0; i < 4; ++i) {
        code_ = (code_ << 8) | next_byte();
    }
}

uint8_t RangeDecoder::next_byte() {
    // The flush writes one byte of the final 4-byte window, so the decoder may
    // run three bytes past the end.
    if (pos_ >= bytes_.size() + 3) {
        throw FormatError("range-coded segment truncated", bytes_.size());
    }
    const uint8_t b = pos_ < bytes_.size() ? bytes_[pos_] : 0;
    ++pos_;
    return b;
}

uint32_t RangeDecoder::target(int total_bits) {
    scale_ = range_ >> total_bits;
    const uint32_t t = code_ / scale_;
    if (t >= (1u << total_bits)) {
        throw FormatError("corrupt range-coded data", pos_ > 4 ? pos_ - 4 : 0);
    }
    return t;
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
    code_ -= scale_ * cum;
    range_ = scale_ * freq;
    while (range_ < kTop) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

std::size_t RangeDecoder::decode_entry(const SymbolPMF& table) {
    const uint32_t t = target(table.precision);
    auto it = std::upper_bound(table.cdf.begin() + 1, table.cdf.end(), t);
    const auto entry = static_cast<std::size_t>(std::distance(table.cdf.begin(), it) - 1);
    consume(table.cdf[entry], table.frequency(entry));
    return entry;
}

uint32_t RangeDecoder::decode_bits(int bits) {
    const uint32_t t = target(bits);
    consume(t, 1);
    return t;
}

void RangeDecoder::finish() const {
    if (pos_ != bytes_.size() + 3) {
        throw FormatError("range-coded segment length mismatch: consumed " +
                              std::to_string(pos_ >= 3 ? pos_ - 3 : 0) + " of " +
                              std::to_string(bytes_.size()) + " bytes",
                          std::min(pos_, bytes_.size()));
    }
}

void encode_symbol(RangeEncoder& encoder, int32_t value, const SymbolPMF& table,
                   SymbolSupport support) {
    if (table.entries() != support.entries()) {
        throw ConfigError("table size does not match the symbol support");
    }
    if (value >= support.min && value <= support.max) {
        encoder.encode_entry(table, static_cast<std::size_t>(value - support.min + 1));
        return;
    }
    const int64_t magnitude = std::abs(static_cast<int64_t>(value));
    if (magnitude > kMaxCodableMagnitude) {
        throw Error("symbol " + std::to_string(value) + " exceeds the escape range");
    }
    encoder.encode_entry(table, value < support.min ? 0 : escape_high(support));
    encoder.encode_bits(value < 0 ? 1u : 0u, 1);
    encoder.encode_bits(static_cast<uint32_t>(magnitude), kEscapeMagnitudeBits);
}

int32_t decode_symbol(RangeDecoder& decoder, const SymbolPMF& table, SymbolSupport support) {
    if (table.entries() != support.entries()) {
        throw ConfigError("table size does not match the symbol support");
    }
    const std::size_t entry = decoder.decode_entry(table);
    if (entry != 0 && entry != escape_high(support)) {
        return support.min + static_cast<int32_t>(entry) - 1;
    }
    const bool negative = decoder.decode_bits(1) != 0;
    const auto magnitude = static_cast<int32_t>(decoder.decode_bits(kEscapeMagnitudeBits));
    const int32_t value = negative ? -magnitude : magnitude;
    const bool valid = entry == 0 ? value < support.min : value > support.max;
    if (!valid) {
        throw FormatError("escaped value " + std::to_string(value) + " lies inside the support");
    }
    return value;
}

double symbol_code_length(int32_t value, const SymbolPMF& table, SymbolSupport support) {
    if (value >= support.min && value <= support.max) {
        return -std::log2(table.probability(static_cast<std::size_t>(value - support.min + 1)));
    }
    const std::size_t entry = value < support.min ? 0 : escape_high(support);
    return -std::log2(table.probability(entry)) + 1.0 + kEscapeMagnitudeBits;
}

std::vector<uint8_t> rc_encode(std::span<const int32_t> symbols, std::span<const SymbolPMF> tables,
                               SymbolSupport support) {
    if (symbols.size() != tables.size()) {
        throw ConfigError("need one table per symbol");
    }
    RangeEncoder encoder;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        encode_symbol(encoder, symbols[i], tables[i], support);
    }
    return encoder.finish();
}

std::vector<int32_t> rc_decode(std::span<const uint8_t> bytes, std::span<const SymbolPMF> tables,
                               SymbolSupport support) {
    RangeDecoder decoder(bytes);
    std::vector<int32_t> symbols;
    symbols.reserve(tables.size());
    for (const auto& table : tables) {
        symbols.push_back(decode_symbol(decoder, table, support));
    }
    decoder.finish();
    return symbols;
}

}  // namespace cgt
