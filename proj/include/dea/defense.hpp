#pragma once

#include <string>

#include "dea/image.hpp"

namespace dea {

struct DefenseSpec {
  enum class Kind { none, squeeze, smooth };
  Kind kind = Kind::none;
  int bits = 4;
  int kernel = 3;

  void validate() const;
};

// Accepts "none", "squeeze:bits=4", "smooth:kernel=3" (parameters optional).
DefenseSpec parse_defense_spec(const std::string& text);
std::string defense_spec_to_string(const DefenseSpec& spec);

// Per channel round-half-up onto the 2^bits - 1 level grid.
Image bit_depth_squeeze(const Image& image, int bits);

// Per channel k x k sliding-window median with reflect padding.
Image median_smooth(const Image& image, int kernel);

Image apply_defense(const Image& image, const DefenseSpec& spec);

}  // namespace dea
