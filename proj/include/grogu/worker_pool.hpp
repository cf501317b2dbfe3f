#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "grogu/error.hpp"

namespace grogu {

// 0 means "one per hardware thread".
std::size_t resolve_jobs(std::size_t requested);

template <typename T>
struct Outcome {
  std::optional<T> value;
  std::string error;  // set when value is empty
  std::optional<ErrorKind> error_kind;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results come back in
// index order regardless of completion order; exceptions are captured per
// item.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t jobs, Fn&& fn)
    -> std::vector<Outcome<std::invoke_result_t<Fn&, std::size_t>>> {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<Outcome<R>> out(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i].value.emplace(fn(i));
      } catch (const Error& e) {
        out[i].error = e.what();
        out[i].error_kind = e.kind();
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  const std::size_t threads = std::min(resolve_jobs(jobs), n);
  if (threads <= 1) {
    work();
    return out;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  pool.clear();
  return out;
}

}  // namespace grogu
