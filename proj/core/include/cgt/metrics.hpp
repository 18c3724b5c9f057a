#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace cgt {

// 10 log10(1 / MSE) for frames in [0, 1]; +infinity for identical frames.
// Throws DimensionError on shape mismatch.
double psnr(const torch::Tensor& reference, const torch::Tensor& test);

struct RDPoint {
    double bpp = 0.0;
    double psnr = 0.0;
};

using RDCurve = std::vector<RDPoint>;

// Interpolates log10(rate) over PSNR with a natural cubic spline and
// integrates it over the common PSNR interval. Returns the mean rate change
// of `test` versus `anchor` in percent; negative means test needs fewer
// bits. Throws ConfigError for fewer than four points, non-increasing rates
// or PSNRs, and when the PSNR ranges do not overlap.
double bd_rate(const RDCurve& anchor, const RDCurve& test);

// CSV with a header row naming at least `bpp` and `psnr` columns; other
// columns are ignored. Throws FormatError.
RDCurve read_rd_csv(const std::filesystem::path& path);
// Writes `lambda,bpp,psnr` rows.
void write_rd_csv(const std::filesystem::path& path, const std::vector<double>& lambdas, const RDCurve& curve);

// Natural cubic spline through (x, y), x strictly increasing.
class NaturalCubicSpline {
public:
    NaturalCubicSpline(std::vector<double> x, std::vector<double> y);

    double operator()(double x) const;
    // Integral from a to b, both inside [x.front(), x.back()].
    double integral(double a, double b) const;

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;  // second derivatives at the knots
};

}  // namespace cgt
