#include <cstdlib>
#include <string>

#include <omp.h>

#include "boostlab/parallel.hpp"
#include "boostlab/random.hpp"

namespace boostlab {

KeyedRng::KeyedRng(std::uint64_t seed, Stream purpose, std::uint64_t key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(key),
                    static_cast<std::uint32_t>(key >> 32)};
  engine_.seed(seq);
}

std::uint64_t KeyedRng::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

namespace {
int g_threads = 0;
}

void set_thread_count(int threads) {
  g_threads = threads < 0 ? 0 : threads;
  omp_set_num_threads(g_threads == 0 ? omp_get_num_procs() : g_threads);
}

int thread_count() { return g_threads == 0 ? omp_get_num_procs() : g_threads; }

int thread_count_from_env() {
  const char* value = std::getenv("BOOSTLAB_THREADS");
  if (value == nullptr) return 0;
  try {
    const int n = std::stoi(value);
    return n > 0 ? n : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace boostlab
