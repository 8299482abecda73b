#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string>

#include "seqcluster/error.hpp"
#include "seqcluster/kernels.hpp"

namespace seqcluster::kernels {
namespace {

std::atomic<const KernelTable*> g_active{nullptr};
std::atomic<std::size_t> g_threads{1};

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_table();
    case Isa::avx2:
      return avx2_table();
  }
  return nullptr;
}

const KernelTable* resolve_initial() {
  if (const char* env = std::getenv("SEQCLUSTER_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && isa_supported(Isa::avx2)) return avx2_table();
  }
  return table_for(best_supported_isa());
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      if (avx2_table() == nullptr) return false;
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa best_supported_isa() { return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    static std::once_flag once;
    std::call_once(once, [] {
      const KernelTable* expected = nullptr;
      g_active.compare_exchange_strong(expected, resolve_initial());
    });
    t = g_active.load(std::memory_order_acquire);
  }
  return *t;
}

void select_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ConfigError("SIMD variant '" + std::string(isa_name(isa)) +
                      "' is not available on this CPU/build");
  }
  g_active.store(table_for(isa), std::memory_order_release);
}

void set_num_threads(std::size_t n) { g_threads.store(n == 0 ? 1 : n); }

std::size_t num_threads() { return g_threads.load(); }

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs,
          std::size_t cs, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate) {
  const KernelTable& t = active();
  // Only split when each worker gets a substantial block.
  const std::size_t min_rows = std::max<std::size_t>(4, (1u << 18) / std::max<std::size_t>(1, n * k));
  parallel_rows(m, min_rows, [&](std::size_t begin, std::size_t end) {
    t.gemm(end - begin, n, k, a + begin * rs, rs, cs, b, ldb, c + begin * ldc, ldc, accumulate);
  });
}

}  // namespace seqcluster::kernels
