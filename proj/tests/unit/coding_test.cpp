#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cgt/bitstream.hpp"
#include "cgt/coder.hpp"
#include "cgt/errors.hpp"
#include "cgt/gaussian.hpp"
#include "cgt/schedule.hpp"
#include "oracles.hpp"

namespace {

using namespace cgt;
using oracle::schedule_oracle;

std::vector<double> random_pmf(std::mt19937_64& rng, std::size_t n) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& v : p) total += (v = e(rng));
    for (auto& v : p) v /= total;
    return p;
}

TEST(Schedule, CoversEveryGridExactly) {
    for (int64_t t : {1, 2, 4, 8}) {
        for (int64_t n = 8; n <= 4096; ++n) {
            const auto s = sinusoidal_schedule(n, t);
            int64_t sum = 0;
            for (int64_t k : s.steps) {
                ASSERT_GE(k, 1) << "n=" << n << " t=" << t;
                sum += k;
            }
            ASSERT_EQ(sum, n);
            ASSERT_EQ(s.step_count(), t);
        }
    }
}

TEST(Schedule, EightStepsMatchHighPrecisionOracle) {
    for (int64_t n = 8; n <= 4096; ++n) {
        ASSERT_EQ(sinusoidal_schedule(n, 8).steps, schedule_oracle(n, 8)) << "n=" << n;
    }
}

TEST(Schedule, FewEarlyManyLate) {
    for (int64_t t : {2, 4, 8}) {
        for (int64_t n = 4 * t; n <= 4096; n += 7) {
            const auto s = sinusoidal_schedule(n, t);
            EXPECT_LE(s.steps.front(), s.steps.back());
        }
    }
}

TEST(Schedule, DegenerateCases) {
    EXPECT_EQ(sinusoidal_schedule(8, 8).steps, std::vector<int64_t>(8, 1));
    EXPECT_EQ(sinusoidal_schedule(37, 1).steps, std::vector<int64_t>{37});
    const auto s = sinusoidal_schedule(256, 8);
    EXPECT_EQ(s.steps, schedule_oracle(256, 8));
    EXPECT_THROW(sinusoidal_schedule(4, 8), ConfigError);
    EXPECT_THROW(sinusoidal_schedule(16, 0), ConfigError);
}

TEST(GaussianPmf, MatchesErrorFunction) {
    const auto p = discretized_gaussian_pmf(0.0, 1.0);
    const SymbolSupport s;
    const auto at = [&](int n) { return p[static_cast<std::size_t>(n - s.min + 1)]; };
    const double expected = 0.5 * (std::erfc(-0.5 / std::numbers::sqrt2) - std::erfc(0.5 / std::numbers::sqrt2));
    EXPECT_NEAR(at(0), expected, 1e-12);
    EXPECT_NEAR(at(0), 0.3829, 1e-4);
    for (int n = 1; n < 10; ++n) EXPECT_NEAR(at(n), at(-n), 1e-15);
}

TEST(GaussianPmf, SumsToOneAndConcentrates) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> mu(-80.0, 80.0), ls(std::log(kSigmaMin), std::log(50.0));
    for (int i = 0; i < 500; ++i) {
        const auto p = discretized_gaussian_pmf(mu(rng), std::exp(ls(rng)));
        double total = 0.0;
        for (double v : p) {
            EXPECT_GE(v, 0.0);
            total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
    }
    const auto sharp = discretized_gaussian_pmf(3.0, kSigmaMin);
    EXPECT_GT(sharp[static_cast<std::size_t>(3 - SymbolSupport{}.min + 1)], 1.0 - 1e-6);
}

TEST(GaussianTensor, BitsAgreeWithTables) {
    auto v = torch::tensor({0.0f, 2.0f, -3.0f});
    auto mu = torch::tensor({0.0f, 1.5f, 0.0f});
    auto sigma = torch::tensor({1.0f, 0.5f, 2.0f});
    auto bits = gaussian_bits(v, mu, sigma);
    const double values[] = {0.0, 2.0, -3.0}, mus[] = {0.0, 1.5, 0.0}, sigmas[] = {1.0, 0.5, 2.0};
    for (int i = 0; i < 3; ++i) {
        const auto p = discretized_gaussian_pmf(mus[i], sigmas[i]);
        const double q = p[static_cast<std::size_t>(static_cast<int>(values[i]) - SymbolSupport{}.min + 1)];
        EXPECT_NEAR(bits[i].item<double>(), -std::log2(q), 1e-4);
    }
    EXPECT_GE(positive_scale(torch::tensor({-1e4f})).item<float>(), static_cast<float>(kSigmaMin));
    EXPECT_NEAR(positive_scale(torch::tensor({-1e4f})).item<float>(), kSigmaMin, 1e-7);
}

TEST(QuantizeCdf, ExactSplitAndFloor) {
    const std::vector<double> half{0.5, 0.5};
    EXPECT_EQ(quantize_cdf(half).cdf, (std::vector<uint32_t>{0, 32768, 65536}));
    const std::vector<double> skew{1.0 - 1e-9, 1e-9};
    const auto t = quantize_cdf(skew);
    EXPECT_EQ(t.frequency(1), 1u);
    EXPECT_EQ(t.cdf.back(), 65536u);
    EXPECT_THROW(quantize_cdf(std::vector<double>{1.0}), ConfigError);
    EXPECT_THROW(quantize_cdf(std::vector<double>(70000, 1.0 / 70000)), ConfigError);
}

TEST(QuantizeCdf, RandomTablesAreExactAndClose) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> len(2, 400);
    for (int i = 0; i < 300; ++i) {
        const auto p = random_pmf(rng, len(rng));
        const auto t = quantize_cdf(p);
        ASSERT_EQ(t.cdf.front(), 0u);
        ASSERT_EQ(t.cdf.back(), 1u << kProbabilityBits);
        for (std::size_t j = 0; j < t.entries(); ++j) {
            ASSERT_GE(t.frequency(j), 1u);
            ASSERT_LE(std::abs(t.probability(j) - p[j]), static_cast<double>(p.size()) / 65536.0);
        }
    }
}

TEST(RangeCoder, PropertyRoundtrip) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> mu(-70.0, 70.0), ls(std::log(kSigmaMin), std::log(40.0));
    std::uniform_int_distribution<int32_t> wild(-kMaxCodableMagnitude, kMaxCodableMagnitude);
    std::bernoulli_distribution escape(0.02);
    std::size_t coded = 0;
    while (coded < 100000) {
        const std::size_t count = 1 + rng() % 3000;
        std::vector<SymbolPMF> tables;
        std::vector<int32_t> symbols;
        for (std::size_t i = 0; i < count; ++i) {
            const double m = mu(rng);
            const double s = std::exp(ls(rng));
            tables.push_back(quantize_cdf(discretized_gaussian_pmf(m, s)));
            std::normal_distribution<double> draw(m, s);
            symbols.push_back(escape(rng) ? wild(rng) : static_cast<int32_t>(std::lround(draw(rng))));
        }
        const auto bytes = rc_encode(symbols, tables);
        ASSERT_EQ(rc_decode(bytes, tables), symbols);
        ASSERT_EQ(rc_encode(symbols, tables), bytes);
        coded += count;
    }
}

TEST(RangeCoder, EmptyStream) {
    const auto bytes = rc_encode({}, {});
    EXPECT_TRUE(rc_decode(bytes, {}).empty());
}

TEST(RangeCoder, UniformSourceRate) {
    std::vector<double> flat(256, 1.0 / 256.0);
    const auto table = quantize_cdf(flat);
    std::mt19937_64 rng(3);
    RangeEncoder enc;
    std::vector<std::size_t> entries;
    for (int i = 0; i < 10000; ++i) {
        entries.push_back(rng() % 256);
        enc.encode_entry(table, entries.back());
    }
    const auto bytes = enc.finish();
    const double rate = 8.0 * static_cast<double>(bytes.size()) / 10000.0;
    EXPECT_NEAR(rate, 8.0, 8.0 * 1e-3);
    RangeDecoder dec(bytes);
    for (auto e : entries) ASSERT_EQ(dec.decode_entry(table), e);
    dec.finish();
}

TEST(RangeCoder, RateWithinSlackOfIdealLength) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SymbolPMF> tables;
        std::vector<int32_t> symbols;
        double ideal = 0.0;
        const int count = 1 + static_cast<int>(rng() % 2000);
        for (int i = 0; i < count; ++i) {
            const double m = std::uniform_real_distribution<double>(-5, 5)(rng);
            const double s = std::uniform_real_distribution<double>(0.05, 6)(rng);
            tables.push_back(quantize_cdf(discretized_gaussian_pmf(m, s)));
            symbols.push_back(static_cast<int32_t>(std::lround(std::normal_distribution<double>(m, s)(rng))));
            ideal += symbol_code_length(symbols.back(), tables.back());
        }
        const double bits = 8.0 * static_cast<double>(rc_encode(symbols, tables).size());
        EXPECT_LE(bits, ideal + 32.0);
        EXPECT_GE(bits, ideal - 1e-6);
    }
}

TEST(RangeCoder, CorruptStreamReportsOffset) {
    std::vector<SymbolPMF> tables(200, quantize_cdf(discretized_gaussian_pmf(0.0, 3.0)));
    std::vector<int32_t> symbols(200, 1);
    auto bytes = rc_encode(symbols, tables);
    bytes.resize(bytes.size() / 2);
    try {
        rc_decode(bytes, tables);
        FAIL() << "truncated stream decoded";
    } catch (const FormatError& e) {
        EXPECT_NE(e.offset(), FormatError::npos);
    }
}

TEST(RangeCoder, EscapeSymbolsCostRawBits) {
    const auto table = quantize_cdf(discretized_gaussian_pmf(0.0, 1.0));
    EXPECT_GT(symbol_code_length(5000, table), 17.0);
    RangeEncoder enc;
    EXPECT_THROW(encode_symbol(enc, kMaxCodableMagnitude + 1, table), Error);
}

Bitstream sample_stream() {
    Bitstream s;
    s.header.frame_h = 64;
    s.header.frame_w = 64;
    s.header.latent_h = 16;
    s.header.latent_w = 16;
    s.header.latent_c = 32;
    s.header.lambda_index = 2;
    s.header.decode_steps = 2;
    s.header.frame_count = 2;
    s.header.ordering = 1;
    s.header.alpha_bits = 0x3f000000u;
    s.header.order_seed = 99;
    for (int f = 0; f < 2; ++f) {
        FrameChunk c;
        c.hyper = {1, 2, 3};
        c.segments = {{4, 5}, {}};
        s.frames.push_back(c);
    }
    return s;
}

TEST(Bitstream, SerializeParseRoundtrip) {
    const auto s = sample_stream();
    const auto bytes = s.serialize();
    EXPECT_EQ(bytes.size(), s.byte_size());
    EXPECT_EQ(bytes[0], 'C');
    const auto back = Bitstream::parse(bytes);
    EXPECT_EQ(back.header, s.header);
    ASSERT_EQ(back.frames.size(), 2u);
    EXPECT_EQ(back.frames[1].hyper, s.frames[1].hyper);
    EXPECT_EQ(back.frames[1].segments, s.frames[1].segments);
    EXPECT_EQ(s.framing_bytes(), kBitstreamHeaderBytes + 2 * 3 * 4);
}

TEST(Bitstream, RejectsMalformedInput) {
    auto bytes = sample_stream().serialize();
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(Bitstream::parse(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(Bitstream::parse(bad_version), FormatError);
    for (std::size_t cut : {std::size_t{3}, kBitstreamHeaderBytes - 1, bytes.size() - 1}) {
        std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_THROW(Bitstream::parse(truncated), FormatError) << cut;
    }
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(Bitstream::parse(trailing), FormatError);
}

}  // namespace
