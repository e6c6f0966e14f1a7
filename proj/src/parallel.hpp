#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace dpfed::detail {

// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
// exception (lowest index) is rethrown after every worker has joined.
template <typename Fn>
inline void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  const int workers = std::min(threads, count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < count; i += workers) {
          try {
            fn(i);
          } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace dpfed::detail
