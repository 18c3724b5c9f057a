#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "cgt/errors.hpp"
#include "cgt/image_io.hpp"
#include "cgt/metrics.hpp"
#include "cgt/synthetic.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

using namespace cgt;
using oracle::OracleSpline;
using oracle::random_curve;
using oracle::trapezoid_bd_rate;

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("cgt_unit_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TEST(BdRate, IdentityAndDoubling) {
    const RDCurve anchor{{0.1, 30.0}, {0.2, 33.0}, {0.4, 35.5}, {0.8, 38.0}};
    EXPECT_NEAR(bd_rate(anchor, anchor), 0.0, 1e-12);
    RDCurve doubled = anchor;
    for (auto& p : doubled) p.bpp *= 2.0;
    EXPECT_NEAR(bd_rate(anchor, doubled), 100.0, 0.01);
    RDCurve halved = anchor;
    for (auto& p : halved) p.bpp *= 0.5;
    EXPECT_NEAR(bd_rate(anchor, halved), -50.0, 0.01);
}

TEST(BdRate, AgreesWithDenseTrapezoidOracle) {
    std::mt19937_64 rng(50);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 4);
        const auto a = random_curve(rng, n);
        auto b = random_curve(rng, n);
        // Shift b into a's quality range so the curves overlap.
        const double offset = a.front().psnr - b.front().psnr + std::uniform_real_distribution<double>(-1, 1)(rng);
        for (auto& p : b) p.psnr += offset;
        const double expected = trapezoid_bd_rate(a, b);
        EXPECT_NEAR(bd_rate(a, b), expected, 1e-3 * std::max(1.0, std::abs(expected))) << trial;
    }
}

TEST(BdRate, RejectsUnusableCurves) {
    const RDCurve good{{0.1, 30.0}, {0.2, 33.0}, {0.4, 35.5}, {0.8, 38.0}};
    EXPECT_THROW(bd_rate(good, RDCurve(good.begin(), good.begin() + 3)), ConfigError);
    RDCurve flat = good;
    flat[2].psnr = flat[1].psnr;
    EXPECT_THROW(bd_rate(good, flat), ConfigError);
    RDCurve far = good;
    for (auto& p : far) p.psnr += 20.0;
    EXPECT_THROW(bd_rate(good, far), ConfigError);
    RDCurve shuffled{good[2], good[0], good[3], good[1]};
    EXPECT_NEAR(bd_rate(good, shuffled), 0.0, 1e-12);
}

TEST(Spline, InterpolatesKnotsAndReproducesLines) {
    NaturalCubicSpline line({0.0, 1.0, 3.0, 4.0}, {1.0, 3.0, 7.0, 9.0});
    EXPECT_NEAR(line(2.0), 5.0, 1e-12);
    EXPECT_NEAR(line.integral(0.0, 4.0), 20.0, 1e-12);
    std::mt19937_64 rng(3);
    std::vector<double> x{0.0}, y;
    for (int i = 0; i < 6; ++i) x.push_back(x.back() + std::uniform_real_distribution<double>(0.3, 2.0)(rng));
    for (std::size_t i = 0; i < x.size(); ++i) y.push_back(std::uniform_real_distribution<double>(-3, 3)(rng));
    NaturalCubicSpline s(x, y);
    OracleSpline o(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(s(x[i]), y[i], 1e-12);
    for (double t = x.front(); t <= x.back(); t += 0.037) EXPECT_NEAR(s(t), o(t), 1e-9);
}

TEST(Psnr, KnownValues) {
    auto a = torch::zeros({3, 4, 4});
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_NEAR(psnr(a, torch::full({3, 4, 4}, 0.1, torch::kDouble)), 20.0, 1e-9);
    EXPECT_THROW(psnr(a, torch::zeros({3, 4, 5})), DimensionError);
}

TEST(RdCsv, RoundtripAndErrors) {
    const auto dir = scratch_dir("csv");
    const RDCurve c{{0.1, 30.0}, {0.25, 33.5}};
    write_rd_csv(dir / "c.csv", {256, 2048}, c);
    const auto back = read_rd_csv(dir / "c.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_DOUBLE_EQ(back[1].bpp, 0.25);
    EXPECT_DOUBLE_EQ(back[1].psnr, 33.5);
    std::ofstream(dir / "swapped.csv") << "psnr, bpp\n31.0, 0.5\n";
    EXPECT_DOUBLE_EQ(read_rd_csv(dir / "swapped.csv")[0].bpp, 0.5);
    std::ofstream(dir / "nocol.csv") << "rate,quality\n1,2\n";
    EXPECT_THROW(read_rd_csv(dir / "nocol.csv"), FormatError);
    std::ofstream(dir / "text.csv") << "bpp,psnr\n0.1,abc\n";
    EXPECT_THROW(read_rd_csv(dir / "text.csv"), FormatError);
    EXPECT_THROW(read_rd_csv(dir / "absent.csv"), FormatError);
}

TEST(Synthetic, DeterministicPerSeed) {
    SyntheticClipSpec spec;
    spec.seed = 7;
    spec.frames = 4;
    EXPECT_TRUE(torch::equal(render_clip(spec), render_clip(spec)));
    auto other = spec;
    other.seed = 8;
    EXPECT_FALSE(torch::equal(render_clip(spec), render_clip(other)));
    const auto dir = scratch_dir("gen");
    write_clip(dir / "a", spec);
    write_clip(dir / "b", spec);
    for (int i = 0; i < 4; ++i) {
        const auto name = "frame_00" + std::to_string(i) + ".png";
        std::ifstream fa(dir / "a" / name, std::ios::binary), fb(dir / "b" / name, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
        EXPECT_FALSE(sa.empty());
        EXPECT_EQ(sa, sb);
    }
}

TEST(Synthetic, StaticSceneHasIdenticalFrames) {
    SyntheticClipSpec spec;
    spec.seed = 3;
    spec.frames = 5;
    spec.max_velocity = 0;
    const auto clip = render_clip(spec);
    for (int64_t t = 1; t < 5; ++t) EXPECT_TRUE(torch::equal(clip[t], clip[0]));
}

TEST(Synthetic, ObjectsMoveByTheirVelocity) {
    SyntheticClipSpec spec;
    spec.seed = 11;
    spec.objects = 1;
    const auto scene = scene_layout(spec);
    const auto& o = scene.objects[0];
    for (int64_t t = 0; t < 10; ++t) {
        const auto [x, y] = object_position(o, t, spec.size);
        EXPECT_EQ(x, ((o.x + o.vx * t) % 64 + 64) % 64);
        EXPECT_EQ(y, ((o.y + o.vy * t) % 64 + 64) % 64);
    }
    // A lone rectangle is drawn exactly at its position.
    SceneLayout flat;
    flat.objects.push_back({false, 10, 20, 3, 2, 2, -1, {200, 100, 50}});
    for (int64_t t = 0; t < 3; ++t) {
        auto frame = render_frame(flat, 32, t);
        const auto [x, y] = object_position(flat.objects[0], t, 32);
        EXPECT_EQ(frame[0][y][x].item<uint8_t>(), 200);
        EXPECT_EQ(frame[1][y + 1][x + 2].item<uint8_t>(), 100);
        EXPECT_EQ(frame[2][y][x + 3].item<uint8_t>(), 0);
        EXPECT_EQ(frame.select(0, 0).eq(200).sum().item<int64_t>(), 6);
    }
}

TEST(ImageIo, PngRoundtripAndClipReader) {
    const auto dir = scratch_dir("png");
    auto rgb = torch::randint(0, 256, {3, 9, 13}, torch::kUInt8);
    write_png(dir / "x.png", rgb);
    EXPECT_TRUE(torch::equal(read_png(dir / "x.png"), rgb));
    EXPECT_TRUE(torch::equal(to_bytes(to_unit(rgb)), rgb));
    std::ofstream(dir / "bad.png") << "nope";
    EXPECT_THROW(read_png(dir / "bad.png"), FormatError);

    SyntheticClipSpec spec;
    spec.seed = 2;
    spec.frames = 3;
    write_clip(dir / "clip", spec);
    const auto frames = read_clip(dir / "clip");
    const auto clip = render_clip(spec);
    ASSERT_EQ(frames.size(), 3u);
    for (int64_t t = 0; t < 3; ++t) EXPECT_TRUE(torch::equal(frames[static_cast<std::size_t>(t)], clip[t]));
    fs::remove(dir / "clip" / "frame_001.png");
    EXPECT_THROW(read_clip(dir / "clip"), FormatError);
    EXPECT_THROW(read_clip(dir / "nothing"), FormatError);
}

}  // namespace
