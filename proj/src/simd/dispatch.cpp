// Dispatch only; no intrinsics in this file.

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "simd/vec_ops.hpp"

namespace flowseed::simd {

namespace {

bool host_has_avx2() {
#if defined(FLOWSEED_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(_M_X64))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const VecOpsTable* table_for(Level level) {
#if defined(FLOWSEED_HAVE_AVX2_TU)
  if (level == Level::Avx2) return &detail::avx2_table;
#else
  (void)level;
#endif
  return &detail::scalar_table;
}

Level pick_startup_level() {
  if (const char* env = std::getenv("FLOWSEED_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Level::Scalar;
    if (std::strcmp(env, "avx2") == 0 && host_has_avx2()) return Level::Avx2;
  }
  return host_has_avx2() ? Level::Avx2 : Level::Scalar;
}

struct Dispatch {
  std::atomic<const VecOpsTable*> table;
  std::atomic<Level> level;
  Dispatch() {
    const Level l = pick_startup_level();
    level.store(l);
    table.store(table_for(l));
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

const VecOpsTable& ops() { return *dispatch().table.load(std::memory_order_relaxed); }

Level active_level() { return dispatch().level.load(std::memory_order_relaxed); }

const char* level_name(Level level) {
  switch (level) {
    case Level::Avx2:
      return "avx2";
    case Level::Scalar:
      return "scalar";
  }
  return "scalar";
}

bool level_supported(Level level) {
  return level == Level::Scalar || host_has_avx2();
}

bool set_level(Level level) {
  if (!level_supported(level)) return false;
  dispatch().level.store(level);
  dispatch().table.store(table_for(level));
  return true;
}

}  // namespace flowseed::simd
