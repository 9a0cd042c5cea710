#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scopeqa/media/frame.hpp"

namespace scopeqa::media {

inline constexpr double kDefaultFps = 25.0;

struct VideoClip {
  std::string id;
  std::vector<Frame> frames;
  double fps = kDefaultFps;
  std::string source_ref;

  std::size_t width() const { return frames.empty() ? 0 : frames.front().width(); }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height(); }
  std::size_t frame_count() const { return frames.size(); }

  // Throws unless >= 1 frame, uniform dimensions and fps > 0.
  void validate() const;
};

// Sorted list of *.png / *.ppm files in a clip directory.
std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir);

// Loads every frame of a clip directory in lexicographic filename order.
VideoClip load_clip(const std::filesystem::path& dir, double fps = kDefaultFps,
                    int threads = 1);

// Loads only the frames sample_indices() would select.
VideoClip load_clip_sampled(const std::filesystem::path& dir, std::size_t n_f,
                            double fps = kDefaultFps, int threads = 1);

// Writes frames as 000.ppm, 001.ppm, ... (or .png).
void write_clip(const VideoClip& clip, const std::filesystem::path& dir,
                const std::string& extension = ".ppm");

// Uniformly spaced temporal indices floor(i * N / n_f) when N >= n_f;
// otherwise 0..N-1 followed by repeats of N-1.
std::vector<std::size_t> sample_indices(std::size_t frame_count, std::size_t n_f);

std::vector<Frame> sample_frames(const VideoClip& clip, std::size_t n_f);

}  // namespace scopeqa::media
