#pragma once

#include <string>

// Thin front end over spdlog, free of torch headers.
namespace cgt::log {

void debug(const std::string& message);
void info(const std::string& message);
void warn(const std::string& message);
void error(const std::string& message);

// "debug", "info", "warn", "error" or "off".
void set_level(const std::string& level);

}  // namespace cgt::log
