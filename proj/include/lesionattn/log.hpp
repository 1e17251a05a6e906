#pragma once

// Thin logging and number-formatting entry points. Translation units that
// pull in libtorch headers use these instead of spdlog/fmt, since libtorch
// ships its own, incompatible fmt headers.

#include <string>

namespace lesionattn {

void log_info(const std::string& message);
void log_warn(const std::string& message);
void log_error(const std::string& message);

/// printf-style %g rendering ("0.001", "1e-05").
std::string format_g(double v);

}  // namespace lesionattn
