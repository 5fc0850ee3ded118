// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace velopick {

/// Upper bound on worker threads used by parallel_for (default: hardware
/// concurrency). Values < 1 are treated as 1.
void set_max_threads(int n);
int max_threads();

/// Runs body(i) for i in [0, n). Iterations must be independent; results are
/// identical regardless of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace velopick
