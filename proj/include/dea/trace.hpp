#pragma once

#include <string>
#include <vector>

#include "dea/attack.hpp"
#include "json.hpp"

namespace dea {

struct ParsedTrace {
  nlohmann::json config;
  std::string image_hash;
  std::vector<TraceRow> rows;
};

// Header lines followed by one "key=value" row per epoch. Values are printed
// with enough digits to round-trip exactly.
std::string trace_to_text(const std::vector<TraceRow>& rows, const nlohmann::json& config_echo,
                          const std::string& image_hash);
ParsedTrace parse_trace_text(const std::string& text);

void write_trace(const std::string& path, const std::vector<TraceRow>& rows,
                 const nlohmann::json& config_echo, const std::string& image_hash);
ParsedTrace read_trace(const std::string& path);

}  // namespace dea
