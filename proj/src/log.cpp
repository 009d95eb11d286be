#include "limes/log.hpp"

#include <cstdlib>
#include <cstring>

namespace limes::log {

bool quiet() {
  static const bool q = [] {
    const char *v = std::getenv("LIMES_QUIET");
    return v && std::strcmp(v, "0") != 0;
  }();
  return q;
}

} // namespace limes::log
