#pragma once

#include <cstddef>
#include <functional>

namespace mg {

// Thread count for the embarrassingly parallel graph stages (k-NN, Dijkstra).
// Reads MG_THREADS; defaults to hardware concurrency.
std::size_t thread_budget();

// Runs body(i) for i in [0, n) split into contiguous chunks across threads.
// Each index is processed exactly once, so results written per index are
// independent of the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mg
