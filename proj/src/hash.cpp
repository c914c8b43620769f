#include "dea/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "dea/error.hpp"

namespace dea {

void Fnv1a64::update(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 1099511628211ull;
  }
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string hash_bytes(std::string_view bytes) {
  Fnv1a64 h;
  h.update(bytes.data(), bytes.size());
  return "fnv1a64:" + hash_hex(h.digest());
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_error, "cannot open " + path);
  Fnv1a64 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    h.update(buf.data(), size_t(in.gcount()));
  }
  return "fnv1a64:" + hash_hex(h.digest());
}

}  // namespace dea
