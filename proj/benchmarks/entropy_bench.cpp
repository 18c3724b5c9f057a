#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "cgt/model.hpp"

namespace {

using namespace cgt;

void entropy_forward(benchmark::State& state, ContextPath path) {
    torch::set_num_threads(1);
    torch::NoGradGuard no_grad;
    torch::manual_seed(0);
    ModelConfig cfg;
    cfg.context_path = path;
    CgtModel model(cfg);
    model->eval();
    const auto& c = cfg.codec;
    auto previous = torch::round(torch::randn({1, c.latent_channels, 16, 16}) * 2);
    auto hyper = torch::randn({1, c.hyper_feature_channels, 16, 16});
    auto temporal = torch::randn({1, c.temporal_feature_channels, 16, 16});
    auto latent = torch::round(torch::randn({1, c.latent_channels, 16, 16}) * 2);
    auto reveal = torch::zeros({1, 16, 16});
    auto& entropy = model->entropy();
    for (auto _ : state) {
        auto fused = entropy->fuse(previous, hyper, temporal);
        benchmark::DoNotOptimize(entropy->predict(latent, reveal, fused).params.mu);
    }
}

void BM_EntropyForwardResampler(benchmark::State& state) { entropy_forward(state, ContextPath::Resampler); }
void BM_EntropyForwardFullAttention(benchmark::State& state) { entropy_forward(state, ContextPath::FullAttention); }

BENCHMARK(BM_EntropyForwardResampler)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EntropyForwardFullAttention)->Unit(benchmark::kMillisecond);

}  // namespace
