// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails. `--only N[,M...]` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../cpp/fuzz.hpp"
#include "../cpp/oracles.hpp"
#include "bpdo/cli.hpp"
#include "bpdo/data_io.hpp"
#include "bpdo/eval.hpp"
#include "bpdo/loss.hpp"
#include "bpdo/pipeline.hpp"
#include "bpdo/priors.hpp"
#include "bpdo/proposal.hpp"

using namespace bpdo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "bpdo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << "bpdo";
  if (code != 0)
    for (const auto& a : args) std::cerr << ' ' << a;
  if (code != 0) std::cerr << " -> exit " << code << "\n" << err.str();
  if (out_text) *out_text = out.str();
  return code;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// --- 1 ---------------------------------------------------------------------
Result gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto reps = run_gradcheck_suite("all", 0);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool ok = !reps.empty();
  std::set<std::string> names;
  for (const auto& r : reps) {
    names.insert(r.op_name);
    ok = ok && r.passed && r.max_rel_err <= 1e-4;
    if (r.max_rel_err >= worst) {
      worst = r.max_rel_err;
      worst_name = r.op_name;
    }
  }
  for (const char* need : {"tam_forward", "deformable_attention", "cls_loss", "dis_loss", "dir_loss", "pm_loss"})
    ok = ok && names.count(need);
  ok = ok && secs <= 120.0;
  return {ok, std::to_string(reps.size()) + " checks, worst " + worst_name + " rel " + fmt("%.3g", worst) + ", " +
                  fmt("%.1f", secs) + " s"};
}

// --- 2 ---------------------------------------------------------------------
Result geometric_oracles() {
  Rng rng(2024);
  std::size_t dt_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const auto rows = static_cast<std::size_t>(rng.integer(1, 64)), cols = static_cast<std::size_t>(rng.integer(1, 64));
    const BinaryMask m = t % 2 ? oracle::random_blobs(rng, rows, cols) : oracle::random_mask(rng, rows, cols, rng.uniform(0.2, 0.97));
    const TensorField d = distance_transform(m);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (std::abs(d.at(0, r, c) - oracle::edt_at(m, static_cast<std::int64_t>(r), static_cast<std::int64_t>(c))) > 1e-6)
          ++dt_bad;
  }
  const Polygon a({{0, 0}, {1, 0}, {1, 1}, {0, 1}}), b({{0.5, 0}, {1.5, 0}, {1.5, 1}, {0.5, 1}});
  const double iou = polygon_iou(a, b);
  std::size_t pm_bad = 0, pm_cases = 0;
  for (std::size_t k = 3; k <= 8; ++k) {
    for (int t = 0; t < 100; ++t, ++pm_cases) {
      std::vector<Point2> gv;
      const int n = static_cast<int>(rng.integer(3, 14));
      for (int i = 0; i < n; ++i) {
        const double ang = 6.283185307179586 * i / n, rad = rng.uniform(2, 8);
        gv.push_back({10 + rad * std::cos(ang), 10 + rad * std::sin(ang)});
      }
      const Polygon gt(gv);
      std::vector<Point2> pred;
      for (std::size_t i = 0; i < k; ++i) pred.push_back({rng.uniform(0, 20), rng.uniform(0, 20)});
      const BoundaryPoints snap[] = {BoundaryPoints(pred)};
      if (std::abs(pm_loss(snap, gt, k) - oracle::pm_brute(pred, resample_polygon(gt, k).points())) > 1e-9) ++pm_bad;
    }
  }
  const bool ok = dt_bad == 0 && std::abs(iou - 1.0 / 3.0) <= 0.01 && pm_bad == 0;
  return {ok, "EDT mismatches " + std::to_string(dt_bad) + "/100 masks, IoU " + fmt("%.5f", iou) + ", pm mismatches " +
                  std::to_string(pm_bad) + "/" + std::to_string(pm_cases)};
}

PipelineConfig acceptance_config() { return PipelineConfig{}; }

// --- 3 ---------------------------------------------------------------------
Result label_invariants() {
  const auto scenes = synth_corpus(33, 50, acceptance_config());
  std::size_t norm_bad = 0, zero_bad = 0, max_bad = 0, count_bad = 0, instances = 0;
  double worst_norm = 0.0;
  for (const auto& s : scenes) {
    const auto lp = make_labeled_priors(s.polygons, s.rows, s.cols);
    const auto& m = lp.maps;
    std::vector<double> inst_max(s.polygons.size(), 0.0);
    for (std::size_t i = 0; i < s.rows * s.cols; ++i) {
      const double nx = m.dir_x.data()[i], ny = m.dir_y.data()[i];
      if (m.cls.data()[i] == 1.0) {
        const double e = std::abs(std::hypot(nx, ny) - 1.0);
        worst_norm = std::max(worst_norm, e);
        if (e > 1e-6) ++norm_bad;
      } else if (nx != 0.0 || ny != 0.0 || m.dist.data()[i] != 0.0) {
        ++zero_bad;
      }
      if (lp.instance[i] >= 0) {
        auto& mx = inst_max[static_cast<std::size_t>(lp.instance[i])];
        mx = std::max(mx, m.dist.data()[i]);
      }
    }
    for (double mx : inst_max) max_bad += std::abs(mx - 1.0) > 1e-6;
    instances += s.polygons.size();
    const BinaryMask core = binarize_distance(m.dist, 0.3);
    if (connected_components(core).count != static_cast<int>(s.polygons.size())) ++count_bad;
  }
  const bool ok = norm_bad == 0 && zero_bad == 0 && max_bad == 0 && count_bad == 0;
  return {ok, std::to_string(instances) + " instances: norm violations " + std::to_string(norm_bad) + " (worst " +
                  fmt("%.2g", worst_norm) + "), off-text nonzero " + std::to_string(zero_bad) + ", max != 1 " +
                  std::to_string(max_bad) + ", core count mismatches " + std::to_string(count_bad)};
}

// --- 4 ---------------------------------------------------------------------
Result proposal_round_trip() {
  const auto scenes = synth_corpus(44, 50, acceptance_config());
  const ProposalConfig pc;
  std::size_t bad_scenes = 0, outside = 0, instances = 0;
  for (const auto& s : scenes) {
    const auto lp = make_labeled_priors(s.polygons, s.rows, s.cols);
    const auto props = extract_proposals_detailed(lp.maps.dist, pc);
    instances += s.polygons.size();
    std::vector<int> hits(s.polygons.size(), 0);
    bool scene_ok = props.size() == s.polygons.size();
    for (const auto& p : props) {
      scene_ok = scene_ok && p.points.k() == 20;
      const int owner = lp.instance[static_cast<std::size_t>(p.seed.row) * s.cols + static_cast<std::size_t>(p.seed.col)];
      if (owner < 0) {
        scene_ok = false;
        continue;
      }
      ++hits[static_cast<std::size_t>(owner)];
      const Polygon& gt = s.polygons[static_cast<std::size_t>(owner)];
      for (const auto& q : p.points.points())
        if (!oracle::point_in_polygon(gt.vertices(), q) && distance_to_boundary(gt, q) > 1e-9) ++outside;
    }
    for (int h : hits) scene_ok = scene_ok && h == 1;
    bad_scenes += !scene_ok;
  }
  return {bad_scenes == 0 && outside == 0, std::to_string(instances) + " instances over 50 scenes: scenes without a 1:1 "
                                           "20-point match " + std::to_string(bad_scenes) + ", points outside GT " +
                                           std::to_string(outside)};
}

// --- 5 and 6 ---------------------------------------------------------------
struct EndToEnd {
  bool ran = false;
  bool ok = false;
  double f = 0.0, p = 0.0, r = 0.0, secs = 0.0;
  fs::path ckpt, held;
};

EndToEnd end_to_end(const fs::path& work) {
  EndToEnd e;
  e.ran = true;
  const auto t0 = Clock::now();
  const fs::path train = work / "train", held = work / "held", det = work / "det";
  e.ckpt = work / "model.ckpt";
  e.held = held;
  bool ok = cli({"synth", "--seed", "1", "--count", "200", "--out", train.string()}) == 0 &&
            cli({"synth", "--seed", "9001", "--count", "50", "--out", held.string()}) == 0 &&
            cli({"fit", "--corpus", train.string(), "--out", e.ckpt.string(), "--epochs", "200"}) == 0 &&
            cli({"detect", "--checkpoint", e.ckpt.string(), "--scenes", held.string(), "--out", det.string(), "--no-png"}) == 0 &&
            cli({"eval", "--pred", (det / "predictions.json").string(), "--gt", (held / "gt.json").string(), "--out",
                 (work / "report.json").string()}) == 0;
  e.secs = seconds_since(t0);
  if (ok) {
    const auto rep = nlohmann::json::parse(slurp(work / "report.json"));
    e.f = rep["f_measure"];
    e.p = rep["precision"];
    e.r = rep["recall"];
  }
  e.ok = ok;
  return e;
}

Result fit_result(const EndToEnd& e) {
  const bool ok = e.ok && e.f >= 0.80 && e.secs <= 1800.0;
  return {ok, (e.ok ? "" : "pipeline error; ") + std::string("P ") + fmt("%.4f", e.p) + " R " + fmt("%.4f", e.r) + " F " +
                  fmt("%.4f", e.f) + " at IoU 0.5, " + fmt("%.0f", e.secs) + " s"};
}

Result dom_improvement(const EndToEnd& e) {
  if (!e.ok) return {false, "no fitted checkpoint"};
  const Model model = load_checkpoint(e.ckpt).model;
  const auto scenes = read_corpus(e.held);
  std::size_t instances = 0, covered = 0, improved = 0;
  double sum0 = 0.0, sumt = 0.0;
  for (const auto& s : scenes) {
    const Detection d = detect(model, s);
    const auto& first = d.iterations.front();
    const auto& last = d.iterations.back();
    const auto lp = make_labeled_priors(s.polygons, s.rows, s.cols);
    instances += s.polygons.size();
    // Each proposal belongs to the instance owning most of its initial points.
    std::vector<int> best_prop(s.polygons.size(), -1);
    std::vector<std::size_t> best_votes(s.polygons.size(), 0);
    for (std::size_t j = 0; j < first.size(); ++j) {
      std::vector<std::size_t> votes(s.polygons.size(), 0);
      for (const auto& q : first[j].points()) {
        const auto r = static_cast<long>(std::lround(q.y)), c = static_cast<long>(std::lround(q.x));
        if (r < 0 || c < 0 || r >= static_cast<long>(s.rows) || c >= static_cast<long>(s.cols)) continue;
        const int o = lp.instance[static_cast<std::size_t>(r) * s.cols + static_cast<std::size_t>(c)];
        if (o >= 0) ++votes[static_cast<std::size_t>(o)];
      }
      for (std::size_t i = 0; i < votes.size(); ++i)
        if (votes[i] > best_votes[i]) {
          best_votes[i] = votes[i];
          best_prop[i] = static_cast<int>(j);
        }
    }
    for (std::size_t i = 0; i < s.polygons.size(); ++i) {
      if (best_prop[i] < 0) continue;
      ++covered;
      const double e0 = boundary_error(first[static_cast<std::size_t>(best_prop[i])], s.polygons[i]);
      const double et = boundary_error(last[static_cast<std::size_t>(best_prop[i])], s.polygons[i]);
      sum0 += e0;
      sumt += et;
      improved += et <= e0;
    }
  }
  const double frac = covered ? static_cast<double>(improved) / static_cast<double>(covered) : 0.0;
  return {covered > 0 && frac >= 0.90,
          std::to_string(improved) + "/" + std::to_string(covered) + " instances improved (" + fmt("%.1f", 100 * frac) +
              "%), " + std::to_string(covered) + "/" + std::to_string(instances) + " instances reached by a proposal, mean "
              "boundary error " + fmt("%.3f", covered ? sum0 / covered : 0.0) + " -> " +
              fmt("%.3f", covered ? sumt / covered : 0.0) + " px"};
}

// --- 7 ---------------------------------------------------------------------
Result schedule() {
  LossWeights w;
  w.eps_epochs = 200;
  const double s0 = schedule_factor(w, 0), se = schedule_factor(w, 200);
  const double e0 = std::abs(s0 - w.gamma / (1 + std::exp(-1.0))), ee = std::abs(se - w.gamma / 2);
  return {e0 <= 1e-9 && ee <= 1e-9, "epoch 0: " + fmt("%.12f", s0) + ", epoch eps: " + fmt("%.12f", se)};
}

// --- 8 ---------------------------------------------------------------------
Result ingestion() {
  const fs::path dir(BPDO_FIXTURE_DIR);
  const auto ctw = read_text_file(dir / "ctw1500_sample.txt");
  const auto tt = read_text_file(dir / "totaltext_sample.txt");
  const auto ms = read_text_file(dir / "msratd500_sample.gt");
  const std::size_t n_ctw = parse_ctw1500(ctw).size(), n_tt = parse_totaltext(tt).size(), n_ms = parse_msratd500(ms).size();
  const auto o = fuzz::run({{ctw, AnnotationFormat::ctw1500}, {tt, AnnotationFormat::totaltext}, {ms, AnnotationFormat::msratd500}},
                           10000, 8);
  const bool ok = n_ctw == 3 && n_tt == 4 && n_ms == 4 && o.other_errors == 0 && o.invalid_polygons == 0 &&
                  o.parsed + o.structured_errors == 10000;
  return {ok, "fixtures " + std::to_string(n_ctw) + "/" + std::to_string(n_tt) + "/" + std::to_string(n_ms) +
                  " records; fuzz 10000 cases: " + std::to_string(o.parsed) + " parsed, " +
                  std::to_string(o.structured_errors) + " structured errors, " + std::to_string(o.other_errors) +
                  " other, " + std::to_string(o.invalid_polygons) + " invalid polygons"};
}

// --- 9 ---------------------------------------------------------------------
Result determinism(const fs::path& work) {
  const fs::path corpus = work / "corpus";
  if (cli({"synth", "--seed", "77", "--count", "16", "--out", corpus.string()}) != 0) return {false, "synth failed"};
  std::string art[2][3];
  for (int run = 0; run < 2; ++run) {
    const fs::path d = work / ("run" + std::to_string(run));
    const std::string ck = (d / "m.ckpt").string();
    fs::create_directories(d);
    if (cli({"fit", "--corpus", corpus.string(), "--out", ck, "--epochs", "8", "--seed", "3"}) != 0 ||
        cli({"detect", "--checkpoint", ck, "--scenes", corpus.string(), "--out", (d / "det").string(), "--no-png"}) != 0 ||
        cli({"eval", "--pred", (d / "det" / "predictions.json").string(), "--gt", (corpus / "gt.json").string(), "--out",
             (d / "report.json").string()}) != 0)
      return {false, "pipeline error"};
    art[run][0] = slurp(ck);
    art[run][1] = slurp(d / "det" / "predictions.json");
    art[run][2] = slurp(d / "report.json");
  }
  const bool a = art[0][0] == art[1][0], b = art[0][1] == art[1][1], c = art[0][2] == art[1][2];
  return {a && b && c && !art[0][0].empty(), std::string("checkpoint ") + (a ? "identical" : "DIFFERS") + " (" +
                                                 std::to_string(art[0][0].size()) + " bytes), predictions " +
                                                 (b ? "identical" : "DIFFERS") + ", report " + (c ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    }
  }
  auto want = [&](int n) { return only.empty() || only.count(n); };
  const fs::path work = fs::temp_directory_path() / "bpdo_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const char* names[] = {"",
                         "gradient fidelity",
                         "geometric oracles",
                         "label-generation invariants",
                         "proposal round-trip",
                         "end-to-end fit",
                         "DOM iterative improvement",
                         "loss schedule",
                         "robust ingestion",
                         "determinism"};
  int failures = 0;
  EndToEnd e2e;
  std::ofstream log("acceptance_report.txt");
  auto report = [&](int n, const std::function<Result()>& f) {
    if (!want(n)) return;
    Result r;
    try {
      r = f();
    } catch (const std::exception& ex) {
      r = {false, std::string("exception: ") + ex.what()};
    }
    failures += !r.pass;
    std::ostringstream line;
    line << "criterion " << n << " (" << names[n] << "): " << (r.pass ? "PASS" : "FAIL") << " - " << r.detail;
    std::cout << line.str() << std::endl;
    log << line.str() << std::endl;
  };
  report(1, gradient_fidelity);
  report(2, geometric_oracles);
  report(3, label_invariants);
  report(4, proposal_round_trip);
  if (want(5) || want(6)) e2e = end_to_end(work / "e2e");
  report(5, [&] { return fit_result(e2e); });
  report(6, [&] { return dom_improvement(e2e); });
  report(7, schedule);
  report(8, ingestion);
  report(9, [&] { return determinism(work / "det"); });
  fs::remove_all(work);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
