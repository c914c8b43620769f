#pragma once

#include <Eigen/Dense>

#include "dea/attention_kind.hpp"
#include "dea/image.hpp"

namespace dea {

enum class MaskSource { alpha_channel, color_threshold, provided_file };

const char* mask_source_name(MaskSource source);

// Binary foreground indicator at image resolution. Entries are exactly 0 or 1
// and both classes are guaranteed non-empty.
struct ForegroundMask {
  Eigen::MatrixXd grid;
  MaskSource source = MaskSource::provided_file;

  long height() const { return grid.rows(); }
  long width() const { return grid.cols(); }
  long foreground_count() const { return long(grid.sum() + 0.5); }
};

// Alpha policy: alpha > 0.5 marks foreground. Throws MissingAlpha without an
// alpha plane, AllForeground/AllBackground on degenerate results.
ForegroundMask mask_from_alpha(const Image& image);

// Corner-color policy: pixels within Euclidean RGB distance tau of the
// dominant corner color (the corner minimizing summed distance to the other
// three; ties break in top-left, top-right, bottom-left, bottom-right order)
// count as background, everything else as foreground.
ForegroundMask mask_from_corner_color(const Image& image, double tau = 0.1);

// Default policy: alpha channel when present, corner-color fallback otherwise.
ForegroundMask extract_foreground_mask(const Image& image, double tau = 0.1);

// User-supplied mask file, single channel; values >= 128/255 read as foreground.
ForegroundMask mask_from_file_image(const Image& image);

Image mask_to_image(const ForegroundMask& mask);

// Area-average resampling of the binary grid to side x side followed by
// thresholding at >= 0.5 (exact ties round to foreground).
Eigen::MatrixXd area_downscale(const Eigen::MatrixXd& grid, long side);

// side = sqrt(d_seq). Throws NotPerfectSquare, UpscaleRequested.
Eigen::MatrixXd downscale_mask(const ForegroundMask& mask, long d_seq);

Eigen::RowVectorXd flatten_row_major(const Eigen::MatrixXd& grid);

// Query-by-key binary mask shaped like one attention map: every row is the
// flattened downscaled grid tiled k times, where k depends on the kind.
struct AttentionMask {
  Eigen::MatrixXd grid;
  AttentionKind kind = AttentionKind::self_attention;
  long k = 1;
  long d_seq = 0;
};

AttentionMask build_attention_mask(const ForegroundMask& mask, long d_seq,
                                   AttentionKind kind, long n_views,
                                   long n_domains);

}  // namespace dea
