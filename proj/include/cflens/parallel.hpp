#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

#include "cflens/types.hpp"

namespace cflens {

// Splits [0, count) into contiguous chunks, one per worker. Each chunk writes
// only its own slots, so results do not depend on the worker count.
template <typename Fn>
void parallel_for(Index count, Index workers, Fn&& body) {
  workers = std::clamp<Index>(workers, 1, std::max<Index>(count, 1));
  if (workers == 1) {
    body(Index{0}, count);
    return;
  }
  const Index chunk = (count + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    for (Index w = 0; w < workers; ++w) {
      const Index begin = w * chunk;
      const Index end = std::min(count, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, w, begin, end] {
        try {
          body(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (const auto& error : errors)
    if (error) std::rethrow_exception(error);
}

}  // namespace cflens
