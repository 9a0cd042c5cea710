#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scopeqa/distort/types.hpp"

namespace scopeqa::media {

enum class Split { kTrain, kTest };

struct ManifestEntry {
  std::string clip_path;  // relative to the manifest's directory unless absolute
  std::string reference_id;
  DistortionType distortion_type = DistortionType::kDB;
  SeverityLevel severity_level = SeverityLevel::kHV;
  std::optional<double> mos;
  std::optional<Split> split;
  std::size_t frame_count = 0;

  DistortionLabel label() const { return {distortion_type, severity_level}; }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // where relative clip paths resolve

  std::size_t clip_count() const { return entries.size(); }
  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<std::string> reference_ids() const;  // sorted, unique
  bool all_have_mos() const;

  // Entries of one split, keeping base_dir.
  DatasetManifest subset(Split split) const;

  // Throws on duplicate clip paths.
  void validate() const;
};

// JSON array of entry objects with the ManifestEntry field names.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text,
                                   const std::filesystem::path& base_dir);

enum class SplitGranularity { kPerClip, kContentDisjoint };

struct SplitSpec {
  double train_fraction = 0.8;
  SplitGranularity granularity = SplitGranularity::kPerClip;
  std::uint64_t seed = 42;
};

// Deterministic train/test assignment. Per-clip mode stratifies by
// (type, level) label and allocates round(fraction * M) training clips by
// largest remainder; content-disjoint mode assigns whole reference ids.
DatasetManifest make_split(const DatasetManifest& manifest, const SplitSpec& spec);

}  // namespace scopeqa::media
