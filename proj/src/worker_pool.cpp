#include "grogu/worker_pool.hpp"

namespace grogu {

std::size_t resolve_jobs(std::size_t requested) {
  if (requested > 0) return requested;
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace grogu
