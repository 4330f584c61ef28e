#include "attractor/parallel.hpp"

namespace attractor {
namespace {
std::atomic<unsigned> g_jobs{0};
}

void set_max_jobs(unsigned jobs) { g_jobs.store(jobs); }

unsigned max_jobs() {
  const unsigned j = g_jobs.load();
  if (j > 0) return j;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace attractor
