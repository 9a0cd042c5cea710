#include "scopeqa/media/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scopeqa/error.hpp"

namespace scopeqa::media {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path DatasetManifest::resolve(const ManifestEntry& e) const {
  const fs::path p(e.clip_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> DatasetManifest::reference_ids() const {
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.reference_id);
  return {ids.begin(), ids.end()};
}

bool DatasetManifest::all_have_mos() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const ManifestEntry& e) { return e.mos.has_value(); });
}

DatasetManifest DatasetManifest::subset(Split split) const {
  DatasetManifest out;
  out.base_dir = base_dir;
  for (const auto& e : entries) {
    if (e.split == split) out.entries.push_back(e);
  }
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    require(seen.insert(e.clip_path).second, ErrorCode::kPrecondition,
            "duplicate clip_path in manifest: " + e.clip_path);
  }
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json arr = json::array();
  for (const auto& e : manifest.entries) {
    json j;
    j["clip_path"] = e.clip_path;
    j["reference_id"] = e.reference_id;
    j["distortion_type"] = std::string(to_string(e.distortion_type));
    j["severity_level"] = level_number(e.severity_level);
    j["mos"] = e.mos ? json(*e.mos) : json(nullptr);
    if (e.split) j["split"] = *e.split == Split::kTrain ? "train" : "test";
    j["frame_count"] = e.frame_count;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const fs::path& base_dir) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception& ex) {
    fail(ErrorCode::kIo, std::string("manifest is not valid JSON: ") + ex.what());
  }
  require(arr.is_array(), ErrorCode::kIo, "manifest must be a JSON array");
  DatasetManifest m;
  m.base_dir = base_dir;
  try {
    for (const auto& j : arr) {
      ManifestEntry e;
      e.clip_path = j.at("clip_path").get<std::string>();
      e.reference_id = j.at("reference_id").get<std::string>();
      const auto type = parse_distortion(j.at("distortion_type").get<std::string>());
      require(type.has_value(), ErrorCode::kIo, "unknown distortion_type in manifest");
      e.distortion_type = *type;
      const auto level = level_from_number(j.at("severity_level").get<int>());
      require(level.has_value(), ErrorCode::kIo, "severity_level must be 1..4");
      e.severity_level = *level;
      if (j.contains("mos") && !j["mos"].is_null()) e.mos = j["mos"].get<double>();
      if (j.contains("split")) {
        const auto s = j["split"].get<std::string>();
        require(s == "train" || s == "test", ErrorCode::kIo, "split must be train|test");
        e.split = s == "train" ? Split::kTrain : Split::kTest;
      }
      if (j.contains("frame_count")) e.frame_count = j["frame_count"].get<std::size_t>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kIo, std::string("malformed manifest entry: ") + ex.what());
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::kIo, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str(), path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::kIo, "cannot write manifest " + path.string());
  out << manifest_to_json(manifest);
  require(bool(out), ErrorCode::kIo, "short write to " + path.string());
}

namespace {

DatasetManifest split_per_clip(const DatasetManifest& manifest, const SplitSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  // Groups keyed by (type, level), iterated in class order.
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    groups[{type_index(e.distortion_type), level_number(e.severity_level)}].push_back(i);
  }
  const std::size_t total = manifest.entries.size();
  const auto target = std::size_t(std::llround(spec.train_fraction * double(total)));

  struct Quota {
    std::vector<std::size_t>* members;
    std::size_t take;
    double remainder;
    std::uint64_t tie;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (auto& [key, members] : groups) {
    const double exact = spec.train_fraction * double(members.size());
    const auto base = std::size_t(std::floor(exact));
    quotas.push_back({&members, base, exact - double(base), rng()});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (quotas[a].remainder != quotas[b].remainder) return quotas[a].remainder > quotas[b].remainder;
    return quotas[a].tie < quotas[b].tie;
  });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    Quota& q = quotas[order[i]];
    if (q.take < q.members->size()) {
      ++q.take;
      ++assigned;
    }
  }

  DatasetManifest out = manifest;
  for (Quota& q : quotas) {
    std::vector<std::size_t> members = *q.members;
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      out.entries[members[k]].split = k < q.take ? Split::kTrain : Split::kTest;
    }
  }
  return out;
}

DatasetManifest split_content_disjoint(const DatasetManifest& manifest, const SplitSpec& spec) {
  std::vector<std::string> refs = manifest.reference_ids();
  require(refs.size() >= 2, ErrorCode::kPrecondition,
          "content-disjoint split needs at least 2 reference ids");
  std::mt19937_64 rng(spec.seed);
  std::shuffle(refs.begin(), refs.end(), rng);
  auto n_train = std::size_t(std::llround(spec.train_fraction * double(refs.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, refs.size() - 1);
  const std::set<std::string> train_refs(refs.begin(), refs.begin() + std::ptrdiff_t(n_train));
  DatasetManifest out = manifest;
  for (auto& e : out.entries) {
    e.split = train_refs.count(e.reference_id) ? Split::kTrain : Split::kTest;
  }
  return out;
}

}  // namespace

DatasetManifest make_split(const DatasetManifest& manifest, const SplitSpec& spec) {
  require(!manifest.entries.empty(), ErrorCode::kPrecondition, "cannot split an empty manifest");
  require(spec.train_fraction > 0.0 && spec.train_fraction < 1.0, ErrorCode::kPrecondition,
          "train_fraction must lie in (0, 1)");
  return spec.granularity == SplitGranularity::kPerClip ? split_per_clip(manifest, spec)
                                                        : split_content_disjoint(manifest, spec);
}

}  // namespace scopeqa::media
