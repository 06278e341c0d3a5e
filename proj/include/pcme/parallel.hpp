#pragma once

#include <cstddef>
#include <functional>

namespace pcme {

/// Caps the number of worker threads used by parallel sweeps (0 = hardware).
void set_max_jobs(unsigned jobs);
unsigned max_jobs();

/// Runs body(i) for i in [0, count). Each index is visited exactly once;
/// callers write results by index so output is independent of scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace pcme
