#include "scopeqa/train/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "scopeqa/error.hpp"
#include "scopeqa/parallel.hpp"

namespace scopeqa::train {

using media::DatasetManifest;

std::vector<ClipSamples> load_samples(const DatasetManifest& manifest, std::size_t n_f,
                                      int threads) {
  std::vector<ClipSamples> out(manifest.entries.size());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    ClipSamples& s = out[i];
    s.entry = i;
    s.reference_id = e.reference_id;
    s.label = e.label();
    s.mos = e.mos;
    s.frames = media::load_clip_sampled(manifest.resolve(e), n_f).frames;
  });
  return out;
}

namespace {

// Vertical flip and transpose of a square frame, which together with the
// horizontal flip span the eight symmetries of the square.
media::Frame flip_vertical(const media::Frame& f) {
  media::Frame out(f.width(), f.height());
  for (std::size_t c = 0; c < media::Frame::kChannels; ++c)
    for (std::size_t y = 0; y < f.height(); ++y)
      for (std::size_t x = 0; x < f.width(); ++x) out.at(c, y, x) = f.at(c, f.height() - 1 - y, x);
  return out;
}

media::Frame transpose(const media::Frame& f) {
  media::Frame out(f.height(), f.width());
  for (std::size_t c = 0; c < media::Frame::kChannels; ++c)
    for (std::size_t y = 0; y < f.height(); ++y)
      for (std::size_t x = 0; x < f.width(); ++x) out.at(c, x, y) = f.at(c, y, x);
  return out;
}

}  // namespace

media::Frame augment_frame(const media::Frame& frame, std::size_t crop, Rng& rng, bool flip,
                           bool rotate) {
  require(crop <= frame.width() && crop <= frame.height(), ErrorCode::kShape,
          "crop " + std::to_string(crop) + " larger than frame " + std::to_string(frame.width()) +
              "x" + std::to_string(frame.height()));
  std::uniform_int_distribution<std::size_t> ox(0, frame.width() - crop);
  std::uniform_int_distribution<std::size_t> oy(0, frame.height() - crop);
  const std::size_t x0 = ox(rng), y0 = oy(rng);
  media::Frame out = media::crop(frame, x0, y0, crop, crop);
  if (flip && std::bernoulli_distribution(0.5)(rng)) out = media::flip_horizontal(out);
  if (rotate) {
    if (std::bernoulli_distribution(0.5)(rng)) out = flip_vertical(out);
    if (std::bernoulli_distribution(0.5)(rng)) out = transpose(out);
  }
  return out;
}

nn::Tensor<float> stack_center_crops(const std::vector<ClipSamples>& clips, std::size_t crop) {
  std::size_t n = 0;
  for (const auto& c : clips) n += c.frames.size();
  require(n > 0, ErrorCode::kPrecondition, "no frames to stack");
  nn::Tensor<float> t(nn::Shape{n, media::Frame::kChannels, crop, crop});
  float* dst = t.data();
  for (const auto& c : clips) {
    for (const auto& f : c.frames) {
      const auto cropped = media::center_crop(f, crop, crop);
      std::copy(cropped.values().begin(), cropped.values().end(), dst);
      dst += cropped.size();
    }
  }
  return t;
}

std::pair<DatasetManifest, DatasetManifest> split_validation(const DatasetManifest& train,
                                                             double fraction,
                                                             std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0, ErrorCode::kPrecondition,
          "validation fraction must lie in [0, 1)");
  const std::size_t m = train.entries.size();
  const auto target = std::size_t(std::llround(fraction * double(m)));
  std::map<std::string, std::vector<std::size_t>> by_content;
  for (std::size_t i = 0; i < m; ++i) by_content[train.entries[i].reference_id].push_back(i);

  Rng rng(seed);
  struct Quota {
    std::vector<std::size_t>* members;
    std::size_t take;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (auto& [ref, members] : by_content) {
    const double exact = fraction * double(members.size());
    const auto base = std::size_t(std::floor(exact));
    quotas.push_back({&members, base, exact - double(base)});
    assigned += base;
    std::shuffle(members.begin(), members.end(), rng);
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    Quota& q = quotas[order[i]];
    if (q.take < q.members->size()) {
      ++q.take;
      ++assigned;
    }
  }

  std::map<std::string, int> label_count;
  for (const auto& e : train.entries) ++label_count[label_name(e.label())];
  std::vector<bool> is_val(m, false);
  for (Quota& q : quotas) {
    std::size_t taken = 0;
    for (int pass = 0; pass < 2 && taken < q.take; ++pass) {
      for (std::size_t i : *q.members) {
        if (taken == q.take) break;
        if (is_val[i]) continue;
        int& remaining = label_count[label_name(train.entries[i].label())];
        if (pass == 0 && remaining <= 1) continue;
        is_val[i] = true;
        --remaining;
        ++taken;
      }
    }
  }
  DatasetManifest fit, val;
  fit.base_dir = val.base_dir = train.base_dir;
  for (std::size_t i = 0; i < m; ++i) (is_val[i] ? val : fit).entries.push_back(train.entries[i]);
  return {fit, val};
}

void PseudoMosSpec::validate() const {
  require(jitter_std >= 0.0, ErrorCode::kPrecondition, "jitter std must be >= 0");
  require(min_score < max_score, ErrorCode::kPrecondition, "invalid MOS scale");
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t l = 1; l < 4; ++l) {
      require(decrements[t][l] > decrements[t][l - 1], ErrorCode::kPrecondition,
              "pseudo-MOS decrements must strictly increase with severity for " +
                  std::string(to_string(kAllDistortions[t])));
    }
  }
}

DatasetManifest assign_pseudo_mos(const DatasetManifest& manifest, const PseudoMosSpec& spec,
                                  std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  DatasetManifest out = manifest;
  for (auto& e : out.entries) {
    const auto it = spec.base_by_content.find(e.reference_id);
    const double base = it != spec.base_by_content.end() ? it->second : spec.base;
    const double dec = spec.decrements[std::size_t(type_index(e.distortion_type))]
                                      [std::size_t(level_number(e.severity_level) - 1)];
    const double noise = spec.jitter_std * jitter(rng);
    e.mos = std::clamp(base - dec + noise, spec.min_score, spec.max_score);
  }
  return out;
}

}  // namespace scopeqa::train
