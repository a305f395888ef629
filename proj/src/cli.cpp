#include "bpdo/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "bpdo/error.hpp"
#include "bpdo/pipeline.hpp"

namespace fs = std::filesystem;

namespace bpdo::cli {

namespace {

/// Argument values that CLI11 accepts but the command rejects.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

void write_text(const fs::path& path, const std::string& text) { write_binary_file(path, as_bytes(text)); }

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : PipelineConfig::load(path);
}

std::vector<fs::path> input_files(const fs::path& p, const std::string& ext = {}) {
  if (!fs::exists(p)) throw Error("no such file or directory: " + p.string());
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_regular_file() && (ext.empty() || e.path().extension() == ext)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

const Rgb kGt{40, 200, 60}, kProposal{70, 130, 255}, kFinal{240, 50, 40};

// labelgen

struct LabelgenArgs {
  std::string annotations, format, out;
  std::size_t rows = 128, cols = 128, src_rows = 0, src_cols = 0;
  bool box_relative = false;
};

int cmd_labelgen(const LabelgenArgs& a, std::ostream& out, std::ostream& err) {
  const AnnotationFormat fmt = parse_annotation_format(a.format);
  fs::create_directories(a.out);
  std::vector<SceneRecord> scenes;
  int failures = 0;
  for (const fs::path& file : input_files(a.annotations)) {
    try {
      const std::string text = read_text_file(file);
      const auto anns = fmt == AnnotationFormat::ctw1500 ? parse_ctw1500(text, a.box_relative) : parse_annotations(text, fmt);
      if (anns.empty()) continue;
      SceneRecord src;
      src.id = file.stem().string();
      double max_x = 0.0, max_y = 0.0;
      for (const auto& an : anns) {
        src.polygons.push_back(an.polygon);
        src.dont_care.push_back(an.dont_care);
        for (const Point2& v : an.polygon.vertices()) {
          max_x = std::max(max_x, v.x);
          max_y = std::max(max_y, v.y);
        }
      }
      src.cols = a.src_cols ? a.src_cols : static_cast<std::size_t>(std::ceil(max_x)) + 1;
      src.rows = a.src_rows ? a.src_rows : static_cast<std::size_t>(std::ceil(max_y)) + 1;
      SceneRecord scene = resize_scene(src, a.rows, a.cols);
      const ClampReport cr = clamp_scene(scene);
      if (cr.vertices_clamped || cr.polygons_dropped) {
        err << file.string() << ": clamped " << cr.vertices_clamped << " vertices, dropped " << cr.polygons_dropped
            << " polygons\n";
      }
      const PriorMaps maps = make_prior_maps(scene.polygons, scene.rows, scene.cols);
      const fs::path base = fs::path(a.out) / scene.id;
      write_container(base.string() + "_cls.bpdt", maps.cls, "cls");
      write_container(base.string() + "_dist.bpdt", maps.dist, "dist");
      write_container(base.string() + "_dir_x.bpdt", maps.dir_x, "dir_x");
      write_container(base.string() + "_dir_y.bpdt", maps.dir_y, "dir_y");
      RgbImage img = RgbImage::from_field(maps.dist);
      for (const auto& p : scene.polygons) img.draw_ring(p.vertices(), kGt);
      const auto png = img.encode_png();
      write_binary_file(base.string() + "_overlay.png", png);
      out << scene.id << ": " << scene.polygons.size() << " instances\n";
      scenes.push_back(std::move(scene));
    } catch (const Error& e) {
      err << file.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  if (!scenes.empty()) write_text(fs::path(a.out) / "gt.json", gt_json(scenes).dump(1) + "\n");
  return failures ? 1 : 0;
}

// synth

int cmd_synth(std::uint64_t seed, std::size_t count, std::size_t max_instances, const std::string& config,
              const std::string& out_dir, std::ostream& out) {
  if (count == 0) throw UsageError("--count must be at least 1");
  const PipelineConfig cfg = load_config(config);
  const auto scenes = synth_corpus(seed, count, cfg, max_instances);
  write_corpus(out_dir, scenes);
  std::size_t inst = 0;
  for (const auto& s : scenes) inst += s.polygons.size();
  out << "wrote " << scenes.size() << " scenes (" << inst << " instances) to " << out_dir << "\n";
  return 0;
}

// fit

struct FitArgs {
  std::string corpus, config, out, curve;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool verbose = false;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  PipelineConfig cfg = load_config(a.config);
  if (a.epochs) cfg.fit.epochs = *a.epochs;
  if (a.seed) cfg.fit.seed = *a.seed;
  if (a.lr) cfg.fit.learning_rate = *a.lr;
  cfg.validate();
  const auto scenes = read_corpus(a.corpus);
  FitHooks hooks;
  if (a.verbose) {
    hooks.on_epoch = [&err](const LossReport& r) {
      err << "epoch " << r.epoch << " total " << r.total << " cls " << r.l_cls << " dis " << r.l_dis << " dir "
          << r.l_dir << " pm " << r.l_pm << "\n";
    };
  }
  const FitResult res = fit(cfg, scenes, hooks);
  save_checkpoint(a.out, res.checkpoint);
  const std::string curve = a.curve.empty() ? a.out + ".csv" : a.curve;
  write_text(curve, loss_curve_csv(res.curve));
  out << "initial total " << res.curve.front().total << ", final total " << res.curve.back().total << "\n";
  return 0;
}

// detect

std::vector<SceneRecord> load_scenes(const fs::path& p) {
  if (fs::is_directory(p) && fs::exists(p / "gt.json")) return read_corpus(p);
  const fs::path dir = fs::is_directory(p / "scenes") ? p / "scenes" : p;
  std::vector<SceneRecord> out;
  for (const fs::path& f : input_files(dir, fs::is_directory(dir) ? ".bpdt" : "")) {
    NamedField nf = read_container(f);
    SceneRecord s;
    s.id = f.stem().string();
    s.rows = nf.field.rows();
    s.cols = nf.field.cols();
    s.features = std::move(nf.field);
    out.push_back(std::move(s));
  }
  return out;
}

int cmd_detect(const std::string& ckpt_path, const std::string& scenes_path, const std::string& out_dir,
               bool no_png, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto scenes = load_scenes(scenes_path);
  fs::create_directories(out_dir);
  std::vector<Detection> dets;
  for (const auto& s : scenes) {
    dets.push_back(detect(ckpt.model, s));
    const Detection& d = dets.back();
    if (!no_png) {
      RgbImage img = RgbImage::from_field(*s.features);
      for (const auto& p : s.polygons) img.draw_ring(p.vertices(), kGt);
      for (const auto& r : d.iterations.front()) img.draw_ring(r.points(), kProposal);
      for (const auto& p : d.polygons) img.draw_ring(p.vertices(), kFinal);
      write_binary_file(fs::path(out_dir) / (s.id + "_overlay.png"), img.encode_png());
      write_binary_file(fs::path(out_dir) / (s.id + "_dist.png"), encode_png_gray(d.predicted, 1));
    }
  }
  write_text(fs::path(out_dir) / "predictions.json", predictions_json(dets).dump(1) + "\n");
  std::size_t n = 0;
  for (const auto& d : dets) n += d.polygons.size();
  out << "detected " << n << " instances in " << dets.size() << " scenes\n";
  return 0;
}

// eval

int cmd_eval(const std::string& pred, const std::string& gt, double threshold, const std::string& out_path,
             std::ostream& out) {
  const auto preds = parse_predictions_json(read_json(pred));
  const auto gts = gt_scenes(parse_gt_json(read_json(gt)));
  const EvalReport r = evaluate(preds, gts, threshold);
  const std::string text = nlohmann::json(r).dump(1) + "\n";
  if (!out_path.empty()) write_text(out_path, text);
  out << text;
  return 0;
}

// gradcheck

int cmd_gradcheck(const std::string& suite, std::uint64_t seed, std::ostream& out) {
  const auto reports = run_gradcheck_suite(suite, seed);
  bool ok = true;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %12s %12s %8s  %s\n", "op", "max_rel_err", "max_abs_err", "params", "result");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-22s %12.3e %12.3e %8zu  %s\n", r.op_name.c_str(), r.max_rel_err,
                  r.max_abs_err, r.n_params_checked, r.passed ? "pass" : "FAIL");
    out << line;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Boundary-point text detection: labels, synthetic data, fitting, detection, evaluation"};
  app.require_subcommand(1);

  LabelgenArgs lg;
  auto* labelgen = app.add_subcommand("labelgen", "Prior-map containers and overlays from annotation files");
  labelgen->add_option("--annotations", lg.annotations, "Annotation file or directory")->required();
  labelgen->add_option("--format", lg.format, "Annotation format")
      ->required()
      ->check(CLI::IsMember({"ctw1500", "totaltext", "msratd500"}));
  labelgen->add_option("--out", lg.out, "Output directory")->required();
  labelgen->add_option("--rows", lg.rows, "Output grid rows")->check(CLI::PositiveNumber);
  labelgen->add_option("--cols", lg.cols, "Output grid cols")->check(CLI::PositiveNumber);
  labelgen->add_option("--src-rows", lg.src_rows, "Source image rows (default: from annotations)");
  labelgen->add_option("--src-cols", lg.src_cols, "Source image cols (default: from annotations)");
  labelgen->add_flag("--ctw-box-relative", lg.box_relative, "CTW1500 records are box + offsets (training labels)");

  std::uint64_t synth_seed = 0;
  std::size_t synth_count = 0, synth_max = 3;
  std::string synth_config, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--seed", synth_seed, "Corpus seed");
  synth->add_option("--count", synth_count, "Number of scenes")->required();
  synth->add_option("--max-instances", synth_max, "Instances per scene are 1..max")->check(CLI::Range(1, 8));
  synth->add_option("--config", synth_config, "Pipeline config file");
  synth->add_option("--out", synth_out, "Output directory")->required();

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Train TAM and DOM on a corpus");
  fitc->add_option("--corpus", fa.corpus, "Corpus directory")->required();
  fitc->add_option("--config", fa.config, "Pipeline config file");
  fitc->add_option("--out", fa.out, "Checkpoint path")->required();
  fitc->add_option("--curve", fa.curve, "Loss curve CSV (default: <out>.csv)");
  fitc->add_option("--epochs", fa.epochs, "Override fit.epochs")->check(CLI::PositiveNumber);
  fitc->add_option("--seed", fa.seed, "Override fit.seed");
  fitc->add_option("--lr", fa.lr, "Override fit.learning_rate")->check(CLI::PositiveNumber);
  fitc->add_flag("--verbose", fa.verbose, "Print every epoch");

  std::string det_ckpt, det_scenes, det_out;
  bool det_no_png = false;
  auto* detectc = app.add_subcommand("detect", "Detect text boundaries with a checkpoint");
  detectc->add_option("--checkpoint", det_ckpt, "Checkpoint path")->required();
  detectc->add_option("--scenes", det_scenes, "Corpus directory, scene directory or container")->required();
  detectc->add_option("--out", det_out, "Output directory")->required();
  detectc->add_flag("--no-png", det_no_png, "Skip overlay images");

  std::string ev_pred, ev_gt, ev_out;
  double ev_thr = 0.5;
  auto* evalc = app.add_subcommand("eval", "Precision, recall and F-measure");
  evalc->add_option("--pred", ev_pred, "predictions.json")->required();
  evalc->add_option("--gt", ev_gt, "gt.json")->required();
  evalc->add_option("--threshold", ev_thr, "IoU threshold")->check(CLI::NonNegativeNumber);
  evalc->add_option("--out", ev_out, "Write the report here as well");

  std::string gc_suite = "all";
  std::uint64_t gc_seed = 0;
  auto* gradc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradc->add_option("--suite", gc_suite, "Suite")->check(CLI::IsMember({"tam", "dom", "loss", "all"}));
  gradc->add_option("--seed", gc_seed, "Problem seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? 0 : 2;
  }

  try {
    if (*labelgen) return cmd_labelgen(lg, out, err);
    if (*synth) return cmd_synth(synth_seed, synth_count, synth_max, synth_config, synth_out, out);
    if (*fitc) return cmd_fit(fa, out, err);
    if (*detectc) return cmd_detect(det_ckpt, det_scenes, det_out, det_no_png, out);
    if (*evalc) return cmd_eval(ev_pred, ev_gt, ev_thr, ev_out, out);
    if (*gradc) return cmd_gradcheck(gc_suite, gc_seed, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace bpdo::cli
