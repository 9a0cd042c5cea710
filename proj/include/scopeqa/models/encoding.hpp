#pragma once

#include <cstdint>
#include <span>

#include "scopeqa/distort/types.hpp"
#include "scopeqa/error.hpp"

namespace scopeqa::models {

inline constexpr int kNumClasses = 20;
inline constexpr int kNumTypes = 5;

// Type-major: index = 4 * type + (level - 1).
constexpr int encode_label(DistortionType type, SeverityLevel level) {
  return 4 * type_index(type) + (level_number(level) - 1);
}
constexpr int encode_label(const DistortionLabel& l) { return encode_label(l.type, l.level); }

inline DistortionLabel decode_label(int index) {
  require(index >= 0 && index < kNumClasses, ErrorCode::kPrecondition,
          "class index out of range: " + std::to_string(index));
  return {kAllDistortions[std::size_t(index / 4)], kAllLevels[std::size_t(index % 4)]};
}

// 20-class index -> 5-class distortion type index.
constexpr int collapse_to_type(int index) { return index / 4; }

inline std::string class_name(int index, int num_classes = kNumClasses) {
  if (num_classes == kNumTypes) {
    require(index >= 0 && index < kNumTypes, ErrorCode::kPrecondition, "type index out of range");
    return std::string(to_string(kAllDistortions[std::size_t(index)]));
  }
  return label_name(decode_label(index));
}

// Argmax with ties resolved to the lowest index.
template <class T>
int predict_class(std::span<const T> probabilities) {
  require(!probabilities.empty(), ErrorCode::kPrecondition, "empty probability vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i) {
    if (probabilities[i] > probabilities[best]) best = i;
  }
  return int(best);
}

}  // namespace scopeqa::models
