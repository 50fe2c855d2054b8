#include "xts/parallel.hpp"

#include <cstdlib>
#include <string>

namespace xts {

int effective_workers(int requested) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  int workers = requested > 0 ? requested : hw;
  if (const char* cap = std::getenv("XTS_THREADS")) {
    try {
      const int limit = std::stoi(cap);
      if (limit >= 1 && limit < workers) workers = limit;
    } catch (...) {
      // unparseable cap is ignored
    }
  }
  return workers;
}

}  // namespace xts
