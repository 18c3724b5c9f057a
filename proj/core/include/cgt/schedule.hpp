#pragma once

#include <cstdint>
#include <vector>

namespace cgt {

// Number of tokens revealed at each decoding step.
struct DecodeSchedule {
    std::vector<int64_t> steps;
    int64_t total = 0;

    int64_t step_count() const { return static_cast<int64_t>(steps.size()); }
};

// Cosine mask-ratio decay over `step_count` steps: step i reveals
// round(n * (cos(pi (i-1) / 2T) - cos(pi i / 2T))) tokens. The last step
// absorbs the rounding residue and steps below one token borrow from the
// currently largest step (lowest index on ties), so the steps sum to n.
// Throws ConfigError unless n >= step_count >= 1.
DecodeSchedule sinusoidal_schedule(int64_t n, int64_t step_count);

}  // namespace cgt
