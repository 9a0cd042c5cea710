#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scopeqa/media/clip.hpp"
#include "scopeqa/media/manifest.hpp"
#include "scopeqa/nn/tensor.hpp"
#include "scopeqa/rng.hpp"

namespace scopeqa::train {

// Sampled frames of one manifest clip plus its labels.
struct ClipSamples {
  std::size_t entry = 0;  // index into the source manifest
  std::string reference_id;
  DistortionLabel label;
  std::optional<double> mos;
  std::vector<media::Frame> frames;
};

// Loads n_f uniformly sampled frames for every entry, in manifest order.
std::vector<ClipSamples> load_samples(const media::DatasetManifest& manifest, std::size_t n_f,
                                      int threads = 1);

// Random crop x crop window, then a horizontal flip with probability 0.5
// when flip is set. With rotate, a vertical flip and a transpose follow, each
// with probability 0.5.
media::Frame augment_frame(const media::Frame& frame, std::size_t crop, Rng& rng,
                           bool flip = true, bool rotate = false);

// Center crops of every frame of every clip, stacked clip-major.
nn::Tensor<float> stack_center_crops(const std::vector<ClipSamples>& clips, std::size_t crop);

// Holds out round(fraction * M) clips for validation, allocated across
// reference contents by largest remainder. Within a content, clips whose
// label keeps another training representative are preferred.
std::pair<media::DatasetManifest, media::DatasetManifest> split_validation(
    const media::DatasetManifest& train, double fraction, std::uint64_t seed);

struct PseudoMosSpec {
  double base = 90.0;
  std::map<std::string, double> base_by_content;  // overrides base per reference id
  // decrements[type][level - 1]
  std::array<std::array<double, 4>, 5> decrements = {{{5, 15, 35, 55},
                                                      {5, 15, 35, 55},
                                                      {5, 15, 35, 55},
                                                      {5, 15, 35, 55},
                                                      {5, 15, 35, 55}}};
  double jitter_std = 2.0;
  double min_score = 0.0;
  double max_score = 100.0;

  void validate() const;
};

// mos = base(content) - decrement(type, level) + N(0, jitter^2), clamped.
media::DatasetManifest assign_pseudo_mos(const media::DatasetManifest& manifest,
                                         const PseudoMosSpec& spec, std::uint64_t seed);

}  // namespace scopeqa::train
