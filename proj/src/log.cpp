#include "lesionattn/log.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace lesionattn {

void log_info(const std::string& message) { spdlog::info("{}", message); }
void log_warn(const std::string& message) { spdlog::warn("{}", message); }
void log_error(const std::string& message) { spdlog::error("{}", message); }

std::string format_g(double v) { return fmt::format("{:g}", v); }

}  // namespace lesionattn
