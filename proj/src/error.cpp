#include "dea/error.hpp"

namespace dea {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::all_foreground: return "AllForeground";
    case Errc::all_background: return "AllBackground";
    case Errc::missing_alpha: return "MissingAlpha";
    case Errc::not_perfect_square: return "NotPerfectSquare";
    case Errc::upscale_requested: return "UpscaleRequested";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::empty_foreground: return "EmptyForeground";
    case Errc::empty_background: return "EmptyBackground";
    case Errc::no_captures: return "NoCaptures";
    case Errc::backend_failure: return "BackendFailure";
    case Errc::degenerate_mask: return "DegenerateMask";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::diverged: return "Diverged";
    case Errc::empty_cloud: return "EmptyCloud";
    case Errc::too_small: return "TooSmall";
    case Errc::bad_bits: return "BadBits";
    case Errc::bad_kernel: return "BadKernel";
    case Errc::config_error: return "ConfigError";
    case Errc::missing_artifact: return "MissingArtifact";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& msg)
    : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

}  // namespace dea
