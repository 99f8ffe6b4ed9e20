#include "dskt/runtime.hpp"

#include <omp.h>

#include <cstdlib>

namespace dskt {

int worker_threads() {
  static const int n = [] {
    int cap = omp_get_max_threads();
    if (const char* env = std::getenv("DSKT_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1 && v < cap) cap = v;
    }
    return cap;
  }();
  return n;
}

}  // namespace dskt
