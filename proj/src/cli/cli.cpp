#include "scopeqa/cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "scopeqa/distort/distort.hpp"
#include "scopeqa/distort/scene.hpp"
#include "scopeqa/error.hpp"
#include "scopeqa/parallel.hpp"
#include "scopeqa/eval/metrics.hpp"
#include "scopeqa/eval/report.hpp"
#include "scopeqa/models/checkpoint.hpp"
#include "scopeqa/models/encoding.hpp"
#include "scopeqa/models/resnet.hpp"
#include "scopeqa/pooling/pooling.hpp"
#include "scopeqa/pooling/vqp.hpp"
#include "scopeqa/train/data.hpp"
#include "scopeqa/train/train.hpp"

namespace scopeqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SCOPEQA_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    require(end && *end == '\0', ErrorCode::kPrecondition,
            std::string("SCOPEQA_SEED is not an unsigned integer: ") + env);
    return v;
  }
  return kDefaultSeed;
}

distort::DistortionParams load_params(const fs::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::kIo, "cannot read params file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, "params file " + path.string() + ": " + e.what());
  }
  distort::DistortionParams p;
  auto table = [&](const char* key, std::array<double, 4>& dst) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    require(v.size() == 4, ErrorCode::kPrecondition, std::string(key) + " needs 4 values");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  try {
    table("white_noise_sigma", p.white_noise_sigma);
    table("defocus_sigma", p.defocus_sigma);
    table("motion_length", p.motion_length);
    table("smoke_alpha", p.smoke_alpha);
    table("illumination_strength", p.illumination_strength);
  } catch (const json::exception& e) {
    fail(ErrorCode::kPrecondition, "params file " + path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

std::vector<media::VideoClip> load_references(const fs::path& dir, int threads) {
  require(fs::is_directory(dir), ErrorCode::kIo, "reference directory not found: " + dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<media::VideoClip> refs;
  for (const auto& d : dirs) {
    if (media::list_frame_files(d).empty()) continue;
    auto clip = media::load_clip(d, media::kDefaultFps, threads);
    clip.id = d.filename().string();
    refs.push_back(std::move(clip));
  }
  require(!refs.empty(), ErrorCode::kPrecondition,
          "no reference clip directories in " + dir.string());
  return refs;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- synth / make-refs ----------------------------------------------------

struct SynthArgs {
  std::string refs, out, params, split = "per-clip", ext = "ppm";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool pseudo_mos = false;
  double jitter = 2.0;
  double train_fraction = 0.8;
};

json cmd_synth(const SynthArgs& a, std::ostream& err) {
  require(a.ext == "ppm" || a.ext == "png", ErrorCode::kPrecondition, "--ext must be ppm or png");
  const std::uint64_t seed = resolve_seed(a.seed);
  distort::DistortionParams params = a.params.empty() ? distort::DistortionParams{} : load_params(a.params);
  params.seed = seed;
  const auto refs = load_references(a.refs, a.threads);
  err << "synthesizing " << refs.size() * 20 << " clips from " << refs.size() << " references\n";
  distort::SynthesisOptions opts;
  opts.threads = a.threads;
  opts.extension = "." + a.ext;
  auto manifest = distort::synthesize_dataset(refs, a.out, params, opts);
  media::SplitSpec split;
  split.train_fraction = a.train_fraction;
  split.seed = derive_seed(seed, {11});
  require(a.split == "per-clip" || a.split == "content", ErrorCode::kPrecondition,
          "--split must be per-clip or content");
  split.granularity = a.split == "content" ? media::SplitGranularity::kContentDisjoint
                                           : media::SplitGranularity::kPerClip;
  manifest = media::make_split(manifest, split);
  if (a.pseudo_mos) {
    train::PseudoMosSpec spec;
    spec.jitter_std = a.jitter;
    manifest = train::assign_pseudo_mos(manifest, spec, derive_seed(seed, {12}));
  }
  const fs::path path = fs::path(a.out) / "manifest.json";
  media::save_manifest(manifest, path);
  std::size_t n_train = 0;
  for (const auto& e : manifest.entries) n_train += e.split == media::Split::kTrain;
  return {{"manifest", path.string()},
          {"clips", manifest.entries.size()},
          {"references", refs.size()},
          {"train", n_train},
          {"test", manifest.entries.size() - n_train},
          {"pseudo_mos", a.pseudo_mos},
          {"seed", seed}};
}

struct MakeRefsArgs {
  std::string out;
  std::size_t count = 3, width = 128, height = 72, frames = 25;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

json cmd_make_refs(const MakeRefsArgs& a) {
  require(a.count >= 1, ErrorCode::kPrecondition, "--count must be >= 1");
  const std::uint64_t seed = resolve_seed(a.seed);
  distort::SceneSpec spec;
  spec.width = a.width;
  spec.height = a.height;
  spec.frames = a.frames;
  std::vector<std::string> names(a.count);
  parallel_for(a.count, a.threads, [&](std::size_t i) {
    char id[16];
    std::snprintf(id, sizeof id, "ref%02zu", i);
    names[i] = id;
    const auto clip = distort::generate_reference_clip(derive_seed(seed, {i}), spec, id);
    media::write_clip(clip, fs::path(a.out) / id);
  });
  json ids = names;
  return {{"out", a.out}, {"references", ids}, {"seed", seed}};
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string task, manifest, out, init, activation = "log_softmax";
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr, val_fraction;
  std::optional<std::size_t> batch, nf, crop;
  int threads = 1;
  bool no_augment = false, no_plateau = false;
};

models::Checkpoint load_ckpt(const std::string& path, const char* role) {
  require(!path.empty(), ErrorCode::kPrecondition,
          std::string("missing prerequisite: pass the ") + role + " checkpoint with --init");
  return models::load_checkpoint(path);
}

std::string kind_of(const models::Checkpoint& c) {
  return c.config.is_object() && c.config.contains("kind") ? c.config.at("kind").get<std::string>()
                                                           : "";
}

models::ResNet frame_model(const models::Checkpoint& c, models::HeadKind head, const char* role) {
  require(kind_of(c) == "frame", ErrorCode::kPrecondition,
          std::string(role) + " checkpoint expected, got a '" + kind_of(c) + "' checkpoint");
  auto m = models::ResNet::from_checkpoint(c);
  require(m.config().head == head, ErrorCode::kPrecondition,
          std::string(role) + " checkpoint expected, head kind differs");
  return m;
}

json cmd_train(const TrainArgs& a, std::ostream& err) {
  static const std::vector<std::string> kTasks = {"fdc", "fdc5", "fqp", "vqp-tl", "vqp-e2e"};
  require(std::find(kTasks.begin(), kTasks.end(), a.task) != kTasks.end(), ErrorCode::kPrecondition,
          "unknown task '" + a.task + "' (fdc|fdc5|fqp|vqp-tl|vqp-e2e)");
  train::TrainConfig cfg = a.task == "fdc"    ? train::fdc_defaults()
                           : a.task == "fdc5" ? train::fdc5_defaults()
                           : a.task == "fqp"  ? train::fqp_defaults()
                                              : train::vqp_defaults();
  cfg.seed = resolve_seed(a.seed);
  cfg.threads = a.threads;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.lr) cfg.lr = *a.lr;
  if (a.batch) cfg.batch = *a.batch;
  if (a.nf) cfg.n_f = *a.nf;
  if (a.crop) cfg.crop = *a.crop;
  if (a.val_fraction) cfg.val_fraction = *a.val_fraction;
  if (a.no_augment) cfg.augment = false;
  if (a.no_plateau) cfg.plateau = false;
  cfg.on_epoch = [&](const train::EpochLog& r) {
    err << a.task << " epoch " << r.epoch << " lr " << r.lr << " train " << r.train_loss << " val "
        << r.val_loss;
    if (r.accuracy) err << " acc " << *r.accuracy;
    err << "\n";
  };

  // Prerequisites first, so a missing checkpoint fails before data loading.
  std::optional<models::Checkpoint> init;
  if (a.task == "fdc5" || a.task == "fqp") init = load_ckpt(a.init, "FDC");
  if (a.task.rfind("vqp", 0) == 0) init = load_ckpt(a.init, "FQP");
  if (a.task == "fdc" && !a.init.empty()) init = load_ckpt(a.init, "FDC");

  const auto manifest = media::load_manifest(a.manifest);
  fs::create_directories(a.out);
  const fs::path ckpt_path = fs::path(a.out) / (a.task + ".sqa");
  const fs::path log_path = fs::path(a.out) / (a.task + "_log.csv");
  json meta = {{"task", a.task}, {"seed", cfg.seed}, {"lr", cfg.lr}, {"epochs", cfg.epochs},
               {"batch", cfg.batch}, {"n_f", cfg.n_f}};
  json summary = {{"task", a.task}, {"checkpoint", ckpt_path.string()}, {"log", log_path.string()}};

  if (a.task == "vqp-tl" || a.task == "vqp-e2e") {
    const auto fqp = frame_model(*init, models::HeadKind::kRegression, "FQP");
    cfg.crop = fqp.config().crop;
    const auto data = train::load_train_data(manifest, cfg);
    pooling::AggregatorConfig agg;
    agg.n_f = cfg.n_f;
    agg.activation = pooling::parse_activation(a.activation);
    auto r = train::train_vqp(data, fqp, agg, cfg,
                              a.task == "vqp-tl" ? train::VqpMode::kTransfer : train::VqpMode::kEndToEnd);
    meta["skipped_batches"] = r.skipped_batches;
    models::save_checkpoint(r.net.to_checkpoint(meta), ckpt_path);
    r.log.write_csv(log_path);
    summary["final_val_loss"] = r.log.rows.back().val_loss;
    summary["epochs"] = r.log.rows.size() - 1;
    summary["skipped_batches"] = r.skipped_batches;
    return summary;
  }

  const auto data = train::load_train_data(manifest, cfg);
  if (a.task == "fqp") {
    const auto fdc = frame_model(*init, models::HeadKind::kClassification, "FDC");
    cfg.crop = fdc.config().crop;
    auto r = train::train_fqp(data, fdc, cfg);
    meta["best_epoch"] = r.best_epoch;
    meta["skipped_batches"] = r.skipped_batches;
    models::save_checkpoint(r.model.to_checkpoint(meta), ckpt_path);
    r.log.write_csv(log_path);
    summary["best_epoch"] = r.best_epoch;
    summary["best_val_loss"] = r.best_val_loss;
    summary["skipped_batches"] = r.skipped_batches;
    return summary;
  }

  train::ClassifierResult r = [&] {
    if (a.task == "fdc5") {
      const auto fdc = frame_model(*init, models::HeadKind::kClassification, "FDC");
      cfg.crop = fdc.config().crop;
      return train::train_fdc5(data, fdc, cfg);
    }
    if (init) {
      const auto m = frame_model(*init, models::HeadKind::kClassification, "FDC");
      cfg.crop = m.config().crop;
      return train::train_fdc(data, cfg, m.config(), &m);
    }
    return train::train_fdc(data, cfg);
  }();
  meta["best_epoch"] = r.best_epoch;
  models::save_checkpoint(r.model.to_checkpoint(meta), ckpt_path);
  r.log.write_csv(log_path);
  summary["best_epoch"] = r.best_epoch;
  summary["best_val_loss"] = r.best_val_loss;
  if (r.best_epoch > 0 && r.log.rows[std::size_t(r.best_epoch - 1)].accuracy)
    summary["val_accuracy"] = *r.log.rows[std::size_t(r.best_epoch - 1)].accuracy;
  return summary;
}

// ---- predict --------------------------------------------------------------

struct PredictArgs {
  std::vector<std::string> ckpts;
  std::string clip, pooling;
  std::optional<std::size_t> nf;
  int threads = 1;
};

nn::Tensor<float> crop_tensor(const std::vector<media::Frame>& frames, std::size_t crop) {
  std::vector<media::Frame> cropped;
  for (const auto& f : frames) cropped.push_back(models::fit_to_crop(f, crop));
  return models::frames_to_tensor(cropped);
}

json cmd_predict(const PredictArgs& a) {
  require(!a.ckpts.empty(), ErrorCode::kPrecondition, "predict needs at least one --ckpt");
  json out = {{"clip", a.clip}};
  for (const auto& path : a.ckpts) {
    const auto ckpt = models::load_checkpoint(path);
    const std::string kind = kind_of(ckpt);
    if (kind == "vqp") {
      require(a.pooling.empty() || a.pooling == "fcnn", ErrorCode::kPrecondition,
              "a VQP checkpoint pools with its FCNN; drop --pooling or use a frame checkpoint");
      auto net = pooling::VqpNet::from_checkpoint(ckpt);
      require(!a.nf || *a.nf == net.n_f(), ErrorCode::kShape,
              "--nf differs from the checkpoint's N_f " + std::to_string(net.n_f()));
      const auto clip = media::load_clip_sampled(a.clip, net.n_f(), media::kDefaultFps, a.threads);
      const auto x = crop_tensor(clip.frames, net.frame_model.config().crop);
      const auto fs_ = net.frame_scores(x);
      out["frame_scores"] = std::vector<double>(fs_.begin(), fs_.end());
      out["video_score"] = net.clip_score(x);
      out["pooling"] = "fcnn";
      continue;
    }
    require(kind == "frame", ErrorCode::kIo, "checkpoint " + path + " has unknown kind '" + kind + "'");
    auto model = models::ResNet::from_checkpoint(ckpt);
    const std::size_t n_f = a.nf.value_or(25);
    const auto clip = media::load_clip_sampled(a.clip, n_f, media::kDefaultFps, a.threads);
    const auto x = crop_tensor(clip.frames, model.config().crop);
    if (model.config().head == models::HeadKind::kClassification) {
      const auto probs = models::fdc_forward(model, x);
      const std::size_t c = probs.dim(1), n = probs.dim(0);
      std::vector<double> mean(c, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) mean[k] += probs.data()[i * c + k] / double(n);
      const int cls = models::predict_class(std::span<const double>(mean));
      out["class"] = cls;
      out["class_name"] = models::class_name(cls, int(c));
      out["class_probabilities"] = mean;
    } else {
      const auto mode = pooling::parse_pooling(a.pooling.empty() ? "arith" : a.pooling);
      const auto s = models::fqp_forward(model, x);
      const std::vector<double> scores(s.begin(), s.end());
      out["frame_scores"] = scores;
      out["video_score"] = pooling::pool_conventional(scores, mode);
      out["pooling"] = pooling::to_string(mode);
    }
  }
  return out;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string ckpt, manifest, out, pooling, scores, split = "test", format = "json,csv,svg";
  std::optional<std::size_t> nf;
  int threads = 1;
};

std::set<std::string> parse_formats(const std::string& s) {
  std::set<std::string> f;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    require(tok == "json" || tok == "csv" || tok == "svg", ErrorCode::kPrecondition,
            "--format entries must be json, csv or svg");
    f.insert(tok);
  }
  return f;
}

media::DatasetManifest select_split(const media::DatasetManifest& m, const std::string& split) {
  media::DatasetManifest out;
  if (split == "all") {
    out = m;
  } else {
    require(split == "test" || split == "train", ErrorCode::kPrecondition,
            "--split must be test, train or all");
    out = m.subset(split == "test" ? media::Split::kTest : media::Split::kTrain);
  }
  require(!out.entries.empty(), ErrorCode::kPrecondition, "empty " + split + " split");
  return out;
}

std::vector<double> scores_from_csv(const fs::path& path, const media::DatasetManifest& m) {
  std::map<std::string, double> by_path;
  std::stringstream ss(read_file(path));
  std::string line;
  bool header = true;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    require(comma != std::string::npos, ErrorCode::kIo, "scores file line without comma: " + line);
    const std::string key = line.substr(0, comma), val = line.substr(comma + 1);
    char* end = nullptr;
    const double v = std::strtod(val.c_str(), &end);
    if (end == val.c_str()) {
      require(header, ErrorCode::kIo, "bad score value: " + line);
      header = false;
      continue;
    }
    header = false;
    by_path[key] = v;
  }
  std::vector<double> out;
  for (const auto& e : m.entries) {
    const auto it = by_path.find(e.clip_path);
    require(it != by_path.end(), ErrorCode::kPrecondition, "no score for clip " + e.clip_path);
    out.push_back(it->second);
  }
  return out;
}

void emit_quality(const eval::EvalReport& report, const fs::path& out_dir,
                  const std::set<std::string>& formats, const std::string& title) {
  if (formats.count("json"))
    eval::write_text(out_dir / "report.json", eval::report_to_json(report).dump(2) + "\n");
  if (formats.count("csv")) eval::write_text(out_dir / "clips.csv", eval::report_rows_csv(report));
  if (formats.count("svg")) eval::write_text(out_dir / "scatter.svg", eval::scatter_svg(report, title));
}

json cmd_evaluate(const EvaluateArgs& a) {
  const auto formats = parse_formats(a.format);
  const auto manifest = select_split(media::load_manifest(a.manifest), a.split);
  fs::create_directories(a.out);

  std::vector<double> mos;
  std::vector<std::string> ids;
  for (const auto& e : manifest.entries) ids.push_back(e.clip_path);
  auto need_mos = [&] {
    for (const auto& e : manifest.entries) {
      require(e.mos.has_value(), ErrorCode::kPrecondition,
              "clip " + e.clip_path + " has no mos; synthesize with --pseudo-mos");
      mos.push_back(*e.mos);
    }
  };

  if (!a.scores.empty()) {
    need_mos();
    const auto preds = scores_from_csv(a.scores, manifest);
    const auto report = eval::evaluate_quality(preds, mos, ids);
    emit_quality(report, a.out, formats, "scores vs MOS");
    json j = eval::report_to_json(report);
    j["source"] = a.scores;
    return j;
  }

  require(!a.ckpt.empty(), ErrorCode::kPrecondition, "evaluate needs --ckpt or --scores");
  const auto ckpt = models::load_checkpoint(a.ckpt);
  const std::string kind = kind_of(ckpt);
  json j;
  if (kind == "vqp") {
    auto net = pooling::VqpNet::from_checkpoint(ckpt);
    const auto clips = train::load_samples(manifest, net.n_f(), a.threads);
    need_mos();
    const std::size_t crop = net.frame_model.config().crop;
    std::vector<double> preds;
    const std::string mode = a.pooling.empty() ? "fcnn" : a.pooling;
    if (mode == "fcnn") {
      preds = train::vqp_scores(net, clips, crop);
    } else {
      const auto p = pooling::parse_pooling(mode);
      for (const auto& s : train::clip_frame_scores(net.frame_model, clips, crop))
        preds.push_back(pooling::pool_conventional(s, p));
    }
    const auto report = eval::evaluate_quality(preds, mos, ids);
    emit_quality(report, a.out, formats, "VQP (" + mode + ") vs MOS");
    j = eval::report_to_json(report);
    j["pooling"] = mode;
  } else {
    require(kind == "frame", ErrorCode::kIo, "checkpoint has unknown kind '" + kind + "'");
    auto model = models::ResNet::from_checkpoint(ckpt);
    const auto clips = train::load_samples(manifest, a.nf.value_or(25), a.threads);
    const std::size_t crop = model.config().crop;
    if (model.config().head == models::HeadKind::kClassification) {
      const std::size_t c = model.config().outputs;
      const bool collapse = c == std::size_t(models::kNumTypes);
      const auto pred = train::classify_frames(model, train::stack_center_crops(clips, crop));
      std::vector<int> truth;
      for (const auto& cl : clips) {
        const int k = models::encode_label(cl.label);
        truth.insert(truth.end(), cl.frames.size(), collapse ? models::collapse_to_type(k) : k);
      }
      const auto cm = eval::confusion_matrix(pred, truth, c);
      std::vector<std::string> names;
      for (std::size_t k = 0; k < c; ++k) names.push_back(models::class_name(int(k), int(c)));
      if (formats.count("csv")) eval::write_text(fs::path(a.out) / "confusion.csv", cm.to_csv(names));
      j = {{"accuracy", cm.accuracy}, {"classes", c}, {"samples", cm.total}};
      if (formats.count("json")) eval::write_text(fs::path(a.out) / "report.json", j.dump(2) + "\n");
    } else {
      require(a.pooling != "fcnn", ErrorCode::kPrecondition,
              "fcnn pooling needs a VQP checkpoint; this is a frame checkpoint");
      const auto p = pooling::parse_pooling(a.pooling.empty() ? "arith" : a.pooling);
      need_mos();
      std::vector<double> preds;
      for (const auto& s : train::clip_frame_scores(model, clips, crop))
        preds.push_back(pooling::pool_conventional(s, p));
      const auto report = eval::evaluate_quality(preds, mos, ids);
      emit_quality(report, a.out, formats, "FQP (" + pooling::to_string(p) + ") vs MOS");
      j = eval::report_to_json(report);
      j["pooling"] = pooling::to_string(p);
    }
  }
  j["checkpoint"] = a.ckpt;
  j["split"] = a.split;
  return j;
}

// ---- baseline-psnr --------------------------------------------------------

struct PsnrArgs {
  std::string manifest, out, refs, pooling = "all", split = "test";
  int threads = 1;
};

json cmd_baseline_psnr(const PsnrArgs& a) {
  const auto full = media::load_manifest(a.manifest);
  const auto manifest = select_split(full, a.split);
  const fs::path refs_dir = a.refs.empty() ? full.base_dir / "refs" : fs::path(a.refs);
  std::vector<pooling::PoolingMode> modes;
  if (a.pooling == "all") {
    modes = {pooling::PoolingMode::kArithmetic, pooling::PoolingMode::kGeometric,
             pooling::PoolingMode::kHarmonic, pooling::PoolingMode::kMedian};
  } else {
    modes = {pooling::parse_pooling(a.pooling)};
  }
  std::map<std::string, media::VideoClip> refs;
  std::vector<double> mos;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> pooled(modes.size());
  for (const auto& e : manifest.entries) {
    require(e.mos.has_value(), ErrorCode::kPrecondition, "clip " + e.clip_path + " has no mos");
    if (!refs.count(e.reference_id))
      refs[e.reference_id] = media::load_clip(refs_dir / e.reference_id, media::kDefaultFps, a.threads);
    const auto clip = media::load_clip(manifest.resolve(e), media::kDefaultFps, a.threads);
    const auto frames = eval::psnr_frames(clip, refs.at(e.reference_id));
    for (std::size_t m = 0; m < modes.size(); ++m)
      pooled[m].push_back(pooling::pool_conventional(frames, modes[m]));
    mos.push_back(*e.mos);
    ids.push_back(e.clip_path);
  }
  fs::create_directories(a.out);
  json j = json::object();
  std::string csv = "id,mos";
  for (auto m : modes) csv += ",psnr_" + pooling::to_string(m);
  csv += "\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::ostringstream row;
    row.precision(9);
    row << ids[i] << "," << mos[i];
    for (const auto& p : pooled) row << "," << p[i];
    csv += row.str() + "\n";
  }
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const auto report = eval::evaluate_quality(pooled[m], mos, ids);
    j[pooling::to_string(modes[m])] = eval::report_to_json(report);
  }
  eval::write_text(fs::path(a.out) / "psnr_clips.csv", csv);
  eval::write_text(fs::path(a.out) / "psnr_report.json", j.dump(2) + "\n");
  return j;
}

// ---- plot -----------------------------------------------------------------

struct PlotArgs {
  std::vector<std::string> logs;
  std::string out, column = "val_loss", title = "validation loss";
  int threads = 1;  // accepted for a uniform flag set; plotting is serial
};

eval::LossSeries read_log(const std::string& spec, const std::string& column) {
  std::string path = spec, name;
  if (const auto colon = spec.rfind(':'); colon != std::string::npos && colon > 1) {
    path = spec.substr(0, colon);
    name = spec.substr(colon + 1);
  }
  if (name.empty()) name = fs::path(path).stem().string();
  std::stringstream ss(read_file(path));
  std::string line;
  require(bool(std::getline(ss, line)), ErrorCode::kIo, "empty log " + path);
  std::vector<std::string> header;
  {
    std::stringstream h(line);
    for (std::string t; std::getline(h, t, ',');) header.push_back(t);
  }
  const auto col = std::find(header.begin(), header.end(), column);
  require(col != header.end(), ErrorCode::kPrecondition, "log " + path + " has no column " + column);
  const std::size_t idx = std::size_t(col - header.begin());
  eval::LossSeries s{name, {}, {}};
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream r(line);
    for (std::string t; std::getline(r, t, ',');) cells.push_back(t);
    require(cells.size() > idx, ErrorCode::kIo, "short row in " + path);
    s.epochs.push_back(std::stod(cells[0]));
    s.values.push_back(std::stod(cells[idx]));
  }
  return s;
}

json cmd_plot(const PlotArgs& a) {
  std::vector<eval::LossSeries> series;
  for (const auto& l : a.logs) series.push_back(read_log(l, a.column));
  eval::write_text(a.out, eval::loss_curve_svg(series, a.title));
  return {{"out", a.out}, {"series", series.size()}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"scopeqa: no-reference quality assessment for laparoscopic video"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto seed_opt = [](CLI::App* sub, std::optional<std::uint64_t>& seed) {
    sub->add_option("--seed", seed, "RNG seed (falls back to $SCOPEQA_SEED, then 42)");
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Synthesize the 5x4 distorted dataset from reference clips");
  s->add_option("--refs", synth.refs, "Directory of reference clip directories")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--params", synth.params, "JSON file overriding severity tables");
  seed_opt(s, synth.seed);
  s->add_option("--threads", synth.threads)->check(CLI::PositiveNumber);
  s->add_flag("--pseudo-mos", synth.pseudo_mos, "Attach pseudo-MOS scores");
  s->add_option("--jitter", synth.jitter, "Pseudo-MOS jitter std")->check(CLI::NonNegativeNumber);
  s->add_option("--train-fraction", synth.train_fraction)->check(CLI::Range(0.0, 1.0));
  s->add_option("--split", synth.split, "per-clip or content");
  s->add_option("--ext", synth.ext, "ppm or png");

  MakeRefsArgs refs;
  auto* mr = app.add_subcommand("make-refs", "Render procedural reference clips");
  mr->add_option("--out", refs.out)->required();
  mr->add_option("--count", refs.count);
  mr->add_option("--width", refs.width);
  mr->add_option("--height", refs.height);
  mr->add_option("--frames", refs.frames);
  seed_opt(mr, refs.seed);
  mr->add_option("--threads", refs.threads)->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train fdc, fdc5, fqp, vqp-tl or vqp-e2e");
  t->add_option("task", tr.task, "fdc|fdc5|fqp|vqp-tl|vqp-e2e")->required();
  t->add_option("--manifest", tr.manifest)->required();
  t->add_option("--out", tr.out)->required();
  t->add_option("--init", tr.init, "Prerequisite checkpoint (FDC for fdc5/fqp, FQP for vqp-*)");
  seed_opt(t, tr.seed);
  t->add_option("--threads", tr.threads)->check(CLI::PositiveNumber);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--lr", tr.lr);
  t->add_option("--batch", tr.batch);
  t->add_option("--nf", tr.nf);
  t->add_option("--crop", tr.crop);
  t->add_option("--val-fraction", tr.val_fraction);
  t->add_option("--activation", tr.activation, "FCNN activation: log_softmax, relu or tanh");
  t->add_flag("--no-augment", tr.no_augment);
  t->add_flag("--no-plateau", tr.no_plateau);

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Score and classify one clip directory");
  p->add_option("--ckpt", pr.ckpts, "Checkpoint (repeatable)")->required();
  p->add_option("--clip", pr.clip)->required();
  p->add_option("--pooling", pr.pooling, "fcnn|arith|geo|harm|median");
  p->add_option("--nf", pr.nf);
  p->add_option("--threads", pr.threads)->check(CLI::PositiveNumber);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "PLCC/SROCC/KROCC or confusion matrix on a split");
  e->add_option("--ckpt", ev.ckpt);
  e->add_option("--scores", ev.scores, "CSV of clip_path,score instead of a checkpoint");
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--out", ev.out)->required();
  e->add_option("--pooling", ev.pooling, "fcnn|arith|geo|harm|median");
  e->add_option("--split", ev.split, "test, train or all");
  e->add_option("--nf", ev.nf);
  e->add_option("--format", ev.format, "Comma list of json,csv,svg");
  e->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);

  PsnrArgs ps;
  auto* b = app.add_subcommand("baseline-psnr", "PSNR against references with conventional pooling");
  b->add_option("--manifest", ps.manifest)->required();
  b->add_option("--out", ps.out)->required();
  b->add_option("--refs", ps.refs, "Reference clips (default: <manifest dir>/refs)");
  b->add_option("--pooling", ps.pooling, "all|arith|geo|harm|median");
  b->add_option("--split", ps.split);
  b->add_option("--threads", ps.threads)->check(CLI::PositiveNumber);

  PlotArgs pl;
  auto* g = app.add_subcommand("plot", "Loss curves from training-log CSVs as SVG");
  g->add_option("--log", pl.logs, "path[:name] (repeatable)")->required();
  g->add_option("--out", pl.out)->required();
  g->add_option("--column", pl.column);
  g->add_option("--title", pl.title);
  g->add_option("--threads", pl.threads)->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& ex) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "E_PRECOND: " << ex.what() << "\n";
    return 2;
  }

  try {
    json result;
    if (*s) result = cmd_synth(synth, err);
    else if (*mr) result = cmd_make_refs(refs);
    else if (*t) result = cmd_train(tr, err);
    else if (*p) result = cmd_predict(pr);
    else if (*e) result = cmd_evaluate(ev);
    else if (*b) result = cmd_baseline_psnr(ps);
    else if (*g) result = cmd_plot(pl);
    out << result.dump(2) << "\n";
    return 0;
  } catch (const Error& ex) {
    err << error_code_name(ex.code()) << ": " << ex.what() << "\n";
  } catch (const fs::filesystem_error& ex) {
    err << "E_IO: " << ex.what() << "\n";
  } catch (const json::exception& ex) {
    err << "E_IO: " << ex.what() << "\n";
  } catch (const std::exception& ex) {
    err << "E_PRECOND: " << ex.what() << "\n";
  }
  return 1;
}

}  // namespace scopeqa::cli
