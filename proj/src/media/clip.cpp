#include "scopeqa/media/clip.hpp"

#include <algorithm>
#include <cstdio>

#include "scopeqa/parallel.hpp"

namespace scopeqa::media {

namespace fs = std::filesystem;

void VideoClip::validate() const {
  require(!frames.empty(), ErrorCode::kPrecondition, "clip '" + id + "' has no frames");
  require(fps > 0.0, ErrorCode::kPrecondition, "clip fps must be positive");
  for (const Frame& f : frames) {
    require(f.same_dimensions(frames.front()), ErrorCode::kShape,
            "clip '" + id + "' mixes frame dimensions");
  }
}

std::vector<fs::path> list_frame_files(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::kIo, "not a clip directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return files;
}

namespace {

VideoClip load_files(const fs::path& dir, const std::vector<fs::path>& files, double fps,
                     int threads) {
  VideoClip clip;
  clip.id = dir.filename().string();
  clip.source_ref = dir.string();
  clip.fps = fps;
  clip.frames.resize(files.size());
  parallel_for(files.size(), threads, [&](std::size_t i) { clip.frames[i] = load_frame(files[i]); });
  clip.validate();
  return clip;
}

}  // namespace

VideoClip load_clip(const fs::path& dir, double fps, int threads) {
  const auto files = list_frame_files(dir);
  require(!files.empty(), ErrorCode::kIo, "clip directory is empty: " + dir.string());
  return load_files(dir, files, fps, threads);
}

VideoClip load_clip_sampled(const fs::path& dir, std::size_t n_f, double fps, int threads) {
  const auto files = list_frame_files(dir);
  require(!files.empty(), ErrorCode::kIo, "clip directory is empty: " + dir.string());
  const auto idx = sample_indices(files.size(), n_f);
  // Load each distinct file once, then expand repeats.
  std::vector<std::size_t> unique_idx(idx);
  unique_idx.erase(std::unique(unique_idx.begin(), unique_idx.end()), unique_idx.end());
  std::vector<fs::path> chosen;
  for (std::size_t i : unique_idx) chosen.push_back(files[i]);
  VideoClip loaded = load_files(dir, chosen, fps, threads);
  VideoClip clip = loaded;
  clip.frames.clear();
  for (std::size_t i : idx) {
    const auto pos = std::lower_bound(unique_idx.begin(), unique_idx.end(), i) - unique_idx.begin();
    clip.frames.push_back(loaded.frames[std::size_t(pos)]);
  }
  return clip;
}

void write_clip(const VideoClip& clip, const fs::path& dir, const std::string& extension) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorCode::kIo, "cannot create " + dir.string());
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%03zu", i);
    write_frame(clip.frames[i], dir / (std::string(name) + extension));
  }
}

std::vector<std::size_t> sample_indices(std::size_t frame_count, std::size_t n_f) {
  require(n_f >= 1, ErrorCode::kPrecondition, "sample count n_f must be >= 1");
  require(frame_count >= 1, ErrorCode::kPrecondition, "cannot sample an empty clip");
  std::vector<std::size_t> idx(n_f);
  if (frame_count >= n_f) {
    for (std::size_t i = 0; i < n_f; ++i) idx[i] = i * frame_count / n_f;
  } else {
    for (std::size_t i = 0; i < n_f; ++i) idx[i] = std::min(i, frame_count - 1);
  }
  return idx;
}

std::vector<Frame> sample_frames(const VideoClip& clip, std::size_t n_f) {
  std::vector<Frame> out;
  for (std::size_t i : sample_indices(clip.frames.size(), n_f)) out.push_back(clip.frames[i]);
  return out;
}

}  // namespace scopeqa::media
