#pragma once

#include <cstdint>

#include "scopeqa/media/clip.hpp"

namespace scopeqa::distort {

struct SceneSpec {
  std::size_t width = 128;
  std::size_t height = 72;
  std::size_t frames = 25;
  double fps = 25.0;
};

// Procedural stand-in for a laparoscopic reference clip: textured pink tissue
// with vessels and specular glints under a slow camera pan, a metallic
// instrument sweeping through the view, and an endoscope vignette.
media::VideoClip generate_reference_clip(std::uint64_t seed, const SceneSpec& spec,
                                         const std::string& id);

}  // namespace scopeqa::distort
