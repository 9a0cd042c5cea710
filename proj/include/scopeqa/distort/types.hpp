#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace scopeqa {

// Order matters: it fixes the 20-way class encoding (type-major).
enum class DistortionType { kDB = 0, kMB = 1, kWN = 2, kSM = 3, kUI = 4 };

enum class SeverityLevel { kHV = 1, kJN = 2, kVA = 3, kEA = 4 };

inline constexpr std::array<DistortionType, 5> kAllDistortions = {
    DistortionType::kDB, DistortionType::kMB, DistortionType::kWN,
    DistortionType::kSM, DistortionType::kUI};

inline constexpr std::array<SeverityLevel, 4> kAllLevels = {
    SeverityLevel::kHV, SeverityLevel::kJN, SeverityLevel::kVA, SeverityLevel::kEA};

constexpr std::string_view to_string(DistortionType t) {
  constexpr std::array<std::string_view, 5> names = {"DB", "MB", "WN", "SM", "UI"};
  return names[static_cast<int>(t)];
}

constexpr std::string_view to_string(SeverityLevel l) {
  constexpr std::array<std::string_view, 4> names = {"HV", "JN", "VA", "EA"};
  return names[static_cast<int>(l) - 1];
}

constexpr int type_index(DistortionType t) { return static_cast<int>(t); }
constexpr int level_number(SeverityLevel l) { return static_cast<int>(l); }

inline std::optional<DistortionType> parse_distortion(std::string_view s) {
  for (DistortionType t : kAllDistortions) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

inline std::optional<SeverityLevel> level_from_number(int n) {
  if (n < 1 || n > 4) return std::nullopt;
  return static_cast<SeverityLevel>(n);
}

inline std::optional<SeverityLevel> parse_level(std::string_view s) {
  for (SeverityLevel l : kAllLevels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

struct DistortionLabel {
  DistortionType type = DistortionType::kDB;
  SeverityLevel level = SeverityLevel::kHV;

  bool operator==(const DistortionLabel&) const = default;
};

inline std::string label_name(const DistortionLabel& l) {
  return std::string(to_string(l.type)) + "-" + std::string(to_string(l.level));
}

}  // namespace scopeqa
