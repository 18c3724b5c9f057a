#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cgt {

inline constexpr int kProbabilityBits = 16;
inline constexpr int kEscapeMagnitudeBits = 16;
inline constexpr int32_t kMaxCodableMagnitude = (1 << kEscapeMagnitudeBits) - 1;
inline constexpr double kSigmaMin = 0.01;

// Directly coded symbol interval. Values outside it go through one of two
// escape buckets followed by a raw sign bit and a 16-bit magnitude.
struct SymbolSupport {
    int32_t min = -64;
    int32_t max = 63;

    int32_t size() const { return max - min + 1; }
    // Table entries: low escape, support symbols, high escape.
    std::size_t entries() const { return static_cast<std::size_t>(size()) + 2; }
};

// Probability of every table entry (low escape, min..max, high escape) for a
// unit-width discretization of N(mu, sigma^2). Sums to one.
std::vector<double> discretized_gaussian_pmf(double mu, double sigma, SymbolSupport support = {});

// Standard normal CDF.
double normal_cdf(double x);

// Fixed-precision cumulative table. Every entry has frequency >= 1 and the
// frequencies sum to exactly 2^precision.
struct SymbolPMF {
    std::vector<uint32_t> cdf;  // entries + 1 values, cdf.front() == 0
    int precision = kProbabilityBits;

    std::size_t entries() const { return cdf.size() - 1; }
    uint32_t frequency(std::size_t entry) const { return cdf[entry + 1] - cdf[entry]; }
    double probability(std::size_t entry) const {
        return static_cast<double>(frequency(entry)) / static_cast<double>(1u << precision);
    }
};

// Rounds each probability to a multiple of 2^-precision (minimum one unit),
// then puts the surplus or deficit on the most probable entry.
// Throws ConfigError if the pmf has fewer than two entries or more than
// 2^precision, or does not sum to one.
SymbolPMF quantize_cdf(std::span<const double> pmf, int precision = kProbabilityBits);

// 32-bit range encoder with carry propagation into the output buffer.
class RangeEncoder {
public:
    // Codes the interval [cum, cum + freq) out of 2^total_bits.
    void encode(uint32_t cum, uint32_t freq, int total_bits);
    void encode_bits(uint32_t value, int bits);
    void encode_entry(const SymbolPMF& table, std::size_t entry);

    // Byte-aligned flush; the encoder must not be used afterwards.
    std::vector<uint8_t> finish();

private:
    void propagate_carry();

    uint64_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const uint8_t> bytes);

    std::size_t decode_entry(const SymbolPMF& table);
    uint32_t decode_bits(int bits);

    // Verifies the stream was consumed exactly; throws FormatError otherwise.
    void finish() const;

private:
    uint32_t target(int total_bits);
    void consume(uint32_t cum, uint32_t freq);
    uint8_t next_byte();

    std::span<const uint8_t> bytes_;
    std::size_t pos_ = 0;
    uint32_t code_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t scale_ = 0;
};

// Symbol-level coding with escapes. Throws Error if |value| exceeds the
// escape magnitude.
void encode_symbol(RangeEncoder& encoder, int32_t value, const SymbolPMF& table,
                   SymbolSupport support = {});
int32_t decode_symbol(RangeDecoder& decoder, const SymbolPMF& table, SymbolSupport support = {});

// Ideal code length -log2 q(value) under the quantized table, including the
// raw escape bits.
double symbol_code_length(int32_t value, const SymbolPMF& table, SymbolSupport support = {});

std::vector<uint8_t> rc_encode(std::span<const int32_t> symbols, std::span<const SymbolPMF> tables,
                               SymbolSupport support = {});
std::vector<int32_t> rc_decode(std::span<const uint8_t> bytes, std::span<const SymbolPMF> tables,
                               SymbolSupport support = {});

}  // namespace cgt
