#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace rkhs {

/// Library-wide logger ("rkhs"), created on first use with a stderr sink.
std::shared_ptr<spdlog::logger> log();

/// Applies RKHS_THREADS (if set) to the OpenMP runtime. Returns the thread count in use.
int configure_threads();

}  // namespace rkhs
