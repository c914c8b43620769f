#pragma once

#include <stdexcept>
#include <string>

namespace dea {

enum class Errc {
  all_foreground,
  all_background,
  missing_alpha,
  not_perfect_square,
  upscale_requested,
  shape_mismatch,
  empty_foreground,
  empty_background,
  no_captures,
  backend_failure,
  degenerate_mask,
  non_finite_loss,
  diverged,
  empty_cloud,
  too_small,
  bad_bits,
  bad_kernel,
  config_error,
  missing_artifact,
  io_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace dea
