#include "rkhs/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <mutex>
#include <string>

#ifdef RKHS_HAVE_OPENMP
#include <omp.h>
#endif

namespace rkhs {

std::shared_ptr<spdlog::logger> log() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> logger;
  std::call_once(once, [] {
    logger = spdlog::get("rkhs");
    if (!logger) logger = spdlog::stderr_color_mt("rkhs");
    logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    if (const char* lvl = std::getenv("RKHS_LOG_LEVEL"))
      logger->set_level(spdlog::level::from_str(lvl));
    else
      logger->set_level(spdlog::level::info);
  });
  return logger;
}

int configure_threads() {
#ifdef RKHS_HAVE_OPENMP
  if (const char* env = std::getenv("RKHS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rkhs
