#pragma once

#include <cstddef>
#include <functional>

namespace emseg {

/// Worker count: EMSEG_THREADS if set and positive, otherwise the hardware
/// concurrency. Always at least 1.
std::size_t thread_budget();

/// Runs body(i) for i in [0, n) using up to thread_budget() threads with a
/// static partition. Bodies must write to disjoint outputs; any reduction is
/// the caller's job and must be done in index order to stay deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace emseg
