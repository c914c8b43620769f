#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace dea {

class Fnv1a64 {
 public:
  void update(const void* data, size_t n);
  uint64_t digest() const { return h_; }

 private:
  uint64_t h_ = 1469598103934665603ull;
};

std::string hash_hex(uint64_t h);
std::string hash_bytes(std::string_view bytes);      // "fnv1a64:<hex>"
std::string hash_file(const std::string& path);      // throws IoError

}  // namespace dea
