#include "cgt/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "cgt/errors.hpp"

namespace cgt {

DecodeSchedule sinusoidal_schedule(int64_t n, int64_t step_count) {
    if (step_count < 1 || n < step_count) {
        throw ConfigError("schedule needs n >= steps >= 1 (n=" + std::to_string(n) +
                          ", steps=" + std::to_string(step_count) + ")");
    }
    DecodeSchedule schedule;
    schedule.total = n;
    schedule.steps.resize(static_cast<std::size_t>(step_count));

    const double half_period = 2.0 * static_cast<double>(step_count);
    int64_t assigned = 0;
    for (int64_t i = 1; i < step_count; ++i) {
        const double share = std::cos(std::numbers::pi * static_cast<double>(i - 1) / half_period) -
                             std::cos(std::numbers::pi * static_cast<double>(i) / half_period);
        const auto k = static_cast<int64_t>(std::llround(static_cast<double>(n) * share));
        schedule.steps[static_cast<std::size_t>(i - 1)] = k;
        assigned += k;
    }
    schedule.steps.back() = n - assigned;

    for (auto& k : schedule.steps) {
        while (k < 1) {
            auto largest = std::max_element(schedule.steps.begin(), schedule.steps.end());
            --*largest;
            ++k;
        }
    }
    return schedule;
}

}  // namespace cgt
