#include "relboltz/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>

namespace relboltz {

int worker_count() {
  int hw = omp_get_num_procs();
  const char* env = std::getenv("RELBOLTZ_THREADS");
  if (env == nullptr) return hw;
  try {
    int cap = std::stoi(env);
    if (cap >= 1) return cap < hw ? cap : hw;
  } catch (const std::exception&) {
  }
  return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::exception_ptr failure;
  std::mutex guard;
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
  for (long long i = 0; i < count; ++i) {
    {
      std::lock_guard<std::mutex> lock(guard);
      if (failure) continue;
    }
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace relboltz
