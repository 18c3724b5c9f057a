#include "cgt/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "cgt/errors.hpp"
#include "cgt/image_io.hpp"

namespace cgt {

namespace {

constexpr int kManifestVersion = 1;

std::array<uint8_t, 3> random_color(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> channel(0, 255);
    return {static_cast<uint8_t>(channel(rng)), static_cast<uint8_t>(channel(rng)),
            static_cast<uint8_t>(channel(rng))};
}

int64_t wrap(int64_t v, int64_t size) { return ((v % size) + size) % size; }

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%03zu.png", i);
    return buf;
}

}  // namespace

SceneLayout scene_layout(const SyntheticClipSpec& spec) {
    if (spec.size <= 0 || spec.frames <= 0 || spec.objects < 0 || spec.max_velocity < 0) {
        throw ConfigError("invalid synthetic clip spec");
    }
    std::mt19937_64 rng(spec.seed);
    SceneLayout scene;
    scene.top = random_color(rng);
    scene.bottom = random_color(rng);
    const int64_t lo = std::max<int64_t>(2, spec.size / 8);
    const int64_t hi = std::max<int64_t>(lo, spec.size * 3 / 8);
    std::uniform_int_distribution<int64_t> extent(lo, hi);
    std::uniform_int_distribution<int64_t> coord(0, spec.size - 1);
    std::uniform_int_distribution<int64_t> velocity(-spec.max_velocity, spec.max_velocity);
    std::bernoulli_distribution ellipse(0.5);
    for (int64_t i = 0; i < spec.objects; ++i) {
        SyntheticObject o;
        o.ellipse = ellipse(rng);
        o.width = extent(rng);
        o.height = extent(rng);
        o.x = coord(rng);
        o.y = coord(rng);
        o.vx = velocity(rng);
        o.vy = velocity(rng);
        o.color = random_color(rng);
        scene.objects.push_back(o);
    }
    return scene;
}

std::pair<int64_t, int64_t> object_position(const SyntheticObject& object, int64_t t, int64_t size) {
    return {wrap(object.x + object.vx * t, size), wrap(object.y + object.vy * t, size)};
}

torch::Tensor render_frame(const SceneLayout& scene, int64_t size, int64_t t) {
    auto frame = torch::empty({3, size, size}, torch::kUInt8);
    auto px = frame.accessor<uint8_t, 3>();
    for (int64_t r = 0; r < size; ++r) {
        const double f = size > 1 ? static_cast<double>(r) / static_cast<double>(size - 1) : 0.0;
        for (int64_t c = 0; c < size; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                const double v = (1.0 - f) * scene.top[ch] + f * scene.bottom[ch];
                px[ch][r][c] = static_cast<uint8_t>(std::lround(v));
            }
        }
    }
    for (const auto& o : scene.objects) {
        const auto [x0, y0] = object_position(o, t, size);
        for (int64_t dy = 0; dy < o.height; ++dy) {
            for (int64_t dx = 0; dx < o.width; ++dx) {
                if (o.ellipse) {
                    const double u = (static_cast<double>(dx) + 0.5) / static_cast<double>(o.width) - 0.5;
                    const double v = (static_cast<double>(dy) + 0.5) / static_cast<double>(o.height) - 0.5;
                    if (u * u + v * v > 0.25) continue;
                }
                const int64_t r = wrap(y0 + dy, size);
                const int64_t c = wrap(x0 + dx, size);
                for (int ch = 0; ch < 3; ++ch) px[ch][r][c] = o.color[ch];
            }
        }
    }
    return frame;
}

torch::Tensor render_clip(const SyntheticClipSpec& spec) {
    const auto scene = scene_layout(spec);
    std::vector<torch::Tensor> frames;
    for (int64_t t = 0; t < spec.frames; ++t) {
        frames.push_back(to_unit(render_frame(scene, spec.size, t)));
    }
    return torch::stack(frames);
}

void write_frames(const std::filesystem::path& dir, const std::vector<torch::Tensor>& frames) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = kManifestVersion;
    manifest["frames"] = nlohmann::json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        write_png(dir / frame_name(i), to_bytes(frames[i]));
        manifest["frames"].push_back(frame_name(i));
    }
    if (!frames.empty()) {
        manifest["height"] = frames.front().size(1);
        manifest["width"] = frames.front().size(2);
    }
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

void write_clip(const std::filesystem::path& dir, const SyntheticClipSpec& spec) {
    std::filesystem::create_directories(dir);
    const auto scene = scene_layout(spec);
    nlohmann::json manifest;
    manifest["version"] = kManifestVersion;
    manifest["width"] = spec.size;
    manifest["height"] = spec.size;
    manifest["seed"] = spec.seed;
    manifest["objects"] = spec.objects;
    manifest["max_velocity"] = spec.max_velocity;
    manifest["frames"] = nlohmann::json::array();
    for (int64_t t = 0; t < spec.frames; ++t) {
        const auto name = frame_name(static_cast<std::size_t>(t));
        write_png(dir / name, render_frame(scene, spec.size, t));
        manifest["frames"].push_back(name);
    }
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

std::vector<torch::Tensor> read_clip(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) {
        throw FormatError("missing manifest " + path.string());
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest " + path.string() + ": " + e.what());
    }
    if (!manifest.contains("frames") || !manifest["frames"].is_array() || manifest["frames"].empty()) {
        throw FormatError("manifest " + path.string() + " lists no frames");
    }
    std::vector<torch::Tensor> frames;
    for (const auto& name : manifest["frames"]) {
        if (!name.is_string()) {
            throw FormatError("manifest frame entries must be file names");
        }
        auto frame = to_unit(read_png(dir / name.get<std::string>()));
        if (!frames.empty() && frame.sizes() != frames.front().sizes()) {
            throw FormatError("frame " + name.get<std::string>() + " differs in size");
        }
        frames.push_back(frame);
    }
    return frames;
}

}  // namespace cgt
