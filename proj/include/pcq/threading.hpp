#pragma once

#include <cstddef>
#include <functional>

namespace pcq {

/// Worker count used by parallel_for. 0 restores the hardware default.
void set_worker_threads(std::size_t n);
std::size_t worker_threads();

/// Runs fn(i) for i in [0, n). Tasks must write results into preallocated
/// slots indexed by i, which keeps outputs identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pcq
