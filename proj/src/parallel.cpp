#include "vgamba/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace vgamba {

namespace {

std::atomic<int> g_cap{0};

int env_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("VGAMBA_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) hw = std::min(hw, v);
  }
  return hw;
}

}  // namespace

int max_threads() {
  const int cap = g_cap.load();
  const int base = env_threads();
  return cap > 0 ? std::min(cap, base) : base;
}

void set_thread_cap(int n) { g_cap.store(n); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int nt = static_cast<int>(std::min<int64_t>(max_threads(), n));
  if (nt <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(nt));
  const int64_t chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const int64_t b = t * chunk;
    const int64_t e = std::min<int64_t>(n, b + chunk);
    if (b >= e) break;
    workers.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace vgamba
