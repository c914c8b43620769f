#include "dea/trace.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dea/error.hpp"

namespace dea {
namespace {

constexpr const char* kHeader = "# dea-attack-trace v1";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, size_t line_no) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    raise(Errc::io_error, "trace line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

long parse_long(const std::string& s, size_t line_no) {
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    raise(Errc::io_error, "trace line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  return v;
}

std::string take_field(std::istringstream& in, const char* key, size_t line_no) {
  std::string token;
  if (!(in >> token))
    raise(Errc::io_error,
          "trace line " + std::to_string(line_no) + ": missing field '" + key + "'");
  std::string prefix = std::string(key) + "=";
  if (token.rfind(prefix, 0) != 0)
    raise(Errc::io_error, "trace line " + std::to_string(line_no) + ": expected '" + key +
                              "=...', got '" + token + "'");
  return token.substr(prefix.size());
}

}  // namespace

std::string trace_to_text(const std::vector<TraceRow>& rows, const nlohmann::json& config_echo,
                          const std::string& image_hash) {
  std::ostringstream out;
  out << kHeader << "\n";
  out << "# config: " << config_echo.dump() << "\n";
  out << "# image_hash: " << image_hash << "\n";
  for (const TraceRow& r : rows) {
    out << "epoch=" << r.epoch << " t=" << r.t << " l_fe=" << fmt(r.l_fe)
        << " l_ae=" << fmt(r.l_ae) << " l_de=" << fmt(r.l_de) << " t_f_mean=" << fmt(r.t_f_mean)
        << " t_b_mean=" << fmt(r.t_b_mean) << " linf_delta=" << fmt(r.linf_delta) << "\n";
  }
  return out.str();
}

ParsedTrace parse_trace_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  ParsedTrace parsed;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != kHeader) raise(Errc::io_error, "trace: missing '" + std::string(kHeader) + "' header");
      saw_header = true;
      continue;
    }
    if (line.rfind("# config: ", 0) == 0) {
      try {
        parsed.config = nlohmann::json::parse(line.substr(10));
      } catch (const nlohmann::json::exception& e) {
        raise(Errc::io_error, "trace line " + std::to_string(line_no) + ": bad config json: " + e.what());
      }
      continue;
    }
    if (line.rfind("# image_hash: ", 0) == 0) {
      parsed.image_hash = line.substr(14);
      continue;
    }
    if (line[0] == '#') continue;
    std::istringstream row_in(line);
    TraceRow r;
    r.epoch = parse_long(take_field(row_in, "epoch", line_no), line_no);
    r.t = parse_long(take_field(row_in, "t", line_no), line_no);
    r.l_fe = parse_double(take_field(row_in, "l_fe", line_no), line_no);
    r.l_ae = parse_double(take_field(row_in, "l_ae", line_no), line_no);
    r.l_de = parse_double(take_field(row_in, "l_de", line_no), line_no);
    r.t_f_mean = parse_double(take_field(row_in, "t_f_mean", line_no), line_no);
    r.t_b_mean = parse_double(take_field(row_in, "t_b_mean", line_no), line_no);
    r.linf_delta = parse_double(take_field(row_in, "linf_delta", line_no), line_no);
    parsed.rows.push_back(r);
  }
  if (!saw_header) raise(Errc::io_error, "trace: empty input");
  return parsed;
}

void write_trace(const std::string& path, const std::vector<TraceRow>& rows,
                 const nlohmann::json& config_echo, const std::string& image_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write trace: " + path);
  out << trace_to_text(rows, config_echo, image_hash);
  if (!out) raise(Errc::io_error, "failed writing trace: " + path);
}

ParsedTrace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_error, "cannot read trace: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace_text(buf.str());
}

}  // namespace dea
