#include "cgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <limits>

#include "cgt/errors.hpp"

namespace cgt {

double psnr(const torch::Tensor& reference, const torch::Tensor& test) {
    if (reference.sizes() != test.sizes()) {
        throw DimensionError("PSNR inputs differ in shape");
    }
    const double mse = (reference.to(torch::kDouble) - test.to(torch::kDouble)).pow(2).mean().item<double>();
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / mse);
}

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) {
        throw ConfigError("spline needs at least two matching knots");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(x_[i] > x_[i - 1])) throw ConfigError("spline knots must be strictly increasing");
    }
    m_.assign(n, 0.0);
    if (n == 2) return;
    // Tridiagonal system for the interior second derivatives.
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = x_[i] - x_[i - 1];
        const double h1 = x_[i + 1] - x_[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t i = 1; i < k; ++i) {
        const double lower = x_[i + 1] - x_[i];
        const double f = lower / diag[i - 1];
        diag[i] -= f * upper[i - 1];
        rhs[i] -= f * rhs[i - 1];
    }
    for (std::size_t i = k; i-- > 0;) {
        const double next = i + 1 < k ? m_[i + 2] : 0.0;
        m_[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }
}

namespace {

struct Cubic {
    double a, b, c, d;  // in t = x - x_i

    double antiderivative(double t) const {
        return t * (a + t * (b / 2.0 + t * (c / 3.0 + t * d / 4.0)));
    }
};

}  // namespace

double NaturalCubicSpline::operator()(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    i = std::min(i, x_.size() - 2);
    const double h = x_[i + 1] - x_[i];
    const double t = x - x_[i];
    const double b = (y_[i + 1] - y_[i]) / h - h * (2.0 * m_[i] + m_[i + 1]) / 6.0;
    return y_[i] + t * (b + t * (m_[i] / 2.0 + t * (m_[i + 1] - m_[i]) / (6.0 * h)));
}

double NaturalCubicSpline::integral(double a, double b) const {
    if (a > b) return -integral(b, a);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < x_.size(); ++i) {
        const double lo = std::max(a, x_[i]);
        const double hi = std::min(b, x_[i + 1]);
        if (hi <= lo) continue;
        const double h = x_[i + 1] - x_[i];
        const Cubic p{y_[i], (y_[i + 1] - y_[i]) / h - h * (2.0 * m_[i] + m_[i + 1]) / 6.0,
                      m_[i] / 2.0, (m_[i + 1] - m_[i]) / (6.0 * h)};
        total += p.antiderivative(hi - x_[i]) - p.antiderivative(lo - x_[i]);
    }
    return total;
}

double bd_rate(const RDCurve& anchor, const RDCurve& test) {
    auto prepare = [](RDCurve curve, const char* name) {
        if (curve.size() < 4) {
            throw ConfigError(std::string(name) + " curve needs at least four points");
        }
        std::sort(curve.begin(), curve.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
        std::vector<double> q;
        std::vector<double> r;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const auto& p = curve[i];
            if (!(p.bpp > 0.0) || !std::isfinite(p.psnr)) {
                throw ConfigError(std::string(name) + " curve has a non-positive rate or non-finite PSNR");
            }
            if (i > 0 && !(p.bpp > curve[i - 1].bpp && p.psnr > curve[i - 1].psnr)) {
                throw ConfigError(std::string(name) + " curve must increase in both rate and PSNR");
            }
            q.push_back(p.psnr);
            r.push_back(std::log10(p.bpp));
        }
        return NaturalCubicSpline(q, r);
    };
    auto range = [](const RDCurve& c) {
        auto [lo, hi] = std::minmax_element(c.begin(), c.end(),
                                            [](const RDPoint& a, const RDPoint& b) { return a.psnr < b.psnr; });
        return std::pair{lo->psnr, hi->psnr};
    };
    const auto sa = prepare(anchor, "anchor");
    const auto st = prepare(test, "test");
    const auto [alo, ahi] = range(anchor);
    const auto [tlo, thi] = range(test);
    const double lo = std::max(alo, tlo);
    const double hi = std::min(ahi, thi);
    if (!(hi > lo)) {
        throw ConfigError("RD curves have no overlapping PSNR range");
    }
    const double mean_diff = (st.integral(lo, hi) - sa.integral(lo, hi)) / (hi - lo);
    return (std::pow(10.0, mean_diff) - 1.0) * 100.0;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto a = cell.find_first_not_of(" \t\r");
        const auto b = cell.find_last_not_of(" \t\r");
        cells.push_back(a == std::string::npos ? std::string{} : cell.substr(a, b - a + 1));
    }
    return cells;
}

}  // namespace

RDCurve read_rd_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
    const auto header = split_csv(line);
    const auto column = [&](const char* name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw FormatError(path.string() + " has no '" + std::string(name) + "' column");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t bpp = column("bpp");
    const std::size_t quality = column("psnr");
    RDCurve curve;
    int64_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv(line);
        if (cells.size() <= std::max(bpp, quality)) {
            throw FormatError(path.string() + " row " + std::to_string(row) + " is short");
        }
        try {
            std::size_t used = 0;
            RDPoint p;
            p.bpp = std::stod(cells[bpp], &used);
            if (used != cells[bpp].size()) throw std::invalid_argument("trailing");
            p.psnr = std::stod(cells[quality], &used);
            if (used != cells[quality].size()) throw std::invalid_argument("trailing");
            curve.push_back(p);
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + " row " + std::to_string(row) + " is not numeric");
        }
    }
    return curve;
}

void write_rd_csv(const std::filesystem::path& path, const std::vector<double>& lambdas, const RDCurve& curve) {
    if (lambdas.size() != curve.size()) throw ConfigError("one lambda per RD point");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out.precision(10);
    out << "lambda,bpp,psnr\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out << lambdas[i] << "," << curve[i].bpp << "," << curve[i].psnr << "\n";
    }
}

}  // namespace cgt
