#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace btnn {

// Error taxonomy shared across the library.
class invalid_input : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class unsupported_shape : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class io_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class validation_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

constexpr std::size_t round_up(std::size_t v, std::size_t m) {
  return (v + m - 1) / m * m;
}

constexpr std::size_t ceil_div(std::size_t a, std::size_t b) {
  return (a + b - 1) / b;
}

// Thread count resolution: explicit request > BTNN_THREADS > hardware.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BTNN_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Splits [0, count) into contiguous chunks, one worker per chunk. Each index
// is handled by exactly one worker, so results never depend on the thread
// count. fn receives (begin, end).
template <typename Fn>
void parallel_chunks(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    if (count > 0) fn(std::size_t{0}, count);
    return;
  }
  unsigned workers = threads;
  if (static_cast<std::size_t>(workers) > count) workers = static_cast<unsigned>(count);
  const std::size_t chunk = ceil_div(count, workers);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t) {
    const std::size_t begin = t * chunk;
    if (begin >= count) break;
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(std::size_t{0}, std::min(count, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace btnn
