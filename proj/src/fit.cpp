#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "bpdo/error.hpp"
#include "bpdo/pipeline.hpp"
#include "bpdo/random.hpp"

namespace bpdo {

std::size_t thread_count() {
  const char* env = std::getenv("BPDO_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) return 1;
  return static_cast<std::size_t>(std::min(v, 256L));
}

namespace {

ad::Matrix plane_row(const TensorField& f) {
  return Eigen::Map<const ad::Matrix>(f.data().data(), 1, static_cast<ad::Index>(f.size()));
}

struct Prepared {
  const SceneRecord* scene = nullptr;
  ad::Matrix features;
  ad::GridShape grid;
  ad::Matrix cls, dist, dir, dis_mask;
  ad::Matrix proposals;  // (rings * k) x 2
  std::vector<std::vector<Point2>> targets;
};

Prepared prepare(const PipelineConfig& cfg, const SceneRecord& scene) {
  if (!scene.features) throw InvalidInput("scene '" + scene.id + "' has no features");
  const TensorField& f = *scene.features;
  if (f.channels() != cfg.c_channels) {
    throw ConfigError("scene '" + scene.id + "' has " + std::to_string(f.channels()) +
                      " feature channels, config expects " + std::to_string(cfg.c_channels));
  }
  Prepared p;
  p.scene = &scene;
  p.features = ad::field_matrix(f);
  p.grid = ad::grid_of(f);
  const LabeledPriors lp = make_labeled_priors(scene.polygons, f.rows(), f.cols());
  p.cls = plane_row(lp.maps.cls);
  p.dist = plane_row(lp.maps.dist);
  p.dir.resize(2, p.cls.cols());
  p.dir.row(0) = plane_row(lp.maps.dir_x);
  p.dir.row(1) = plane_row(lp.maps.dir_y);
  p.dis_mask = cfg.loss.include_background ? ad::Matrix::Ones(1, p.cls.cols()) : p.cls;

  const std::size_t k = cfg.proposal.k_points;
  std::vector<BoundaryPoints> rings;
  for (const Proposal& pr : extract_proposals_detailed(lp.maps.dist, cfg.proposal)) {
    const int inst = lp.instance[static_cast<std::size_t>(pr.seed.row) * f.cols() + static_cast<std::size_t>(pr.seed.col)];
    rings.push_back(pr.points);
    if (inst >= 0) {
      p.targets.push_back(resample_polygon(scene.polygons[static_cast<std::size_t>(inst)], k).points());
    } else {
      p.targets.emplace_back();
    }
  }
  p.proposals = points_matrix(rings);
  return p;
}

struct SceneGraph {
  ad::Var total, l_cls, l_dis, l_dir, l_pm;
  double schedule = 0.0;
};

SceneGraph scene_graph(ad::Tape& tape, const Model& m, const Prepared& p, std::size_t epoch) {
  const PipelineConfig& cfg = m.config;
  const LossWeights w = cfg.loss_weights();
  const TamVars tv = bind_tam(tape, m.tam);
  std::vector<DomVars> dv;
  for (const auto& d : m.dom) dv.push_back(bind_dom(tape, d));
  const TamGraph tg = tam_forward(tape.constant(p.features), p.grid, tv);

  SceneGraph g;
  g.l_cls = ad::bce_mean(ad::slice_rows(tg.predicted, 0, 1), p.cls);
  g.l_dis = ad::masked_mse(ad::slice_rows(tg.predicted, 1, 1), p.dist, p.dis_mask);
  g.l_dir = ad::direction_loss(ad::slice_rows(tg.predicted, 2, 2), p.dir, p.cls);
  if (p.proposals.rows() > 0) {
    const auto snaps = dom_optimize(tg.f_tam, p.grid, tape.constant(p.proposals), dv, cfg.dom.t_iters);
    g.l_pm = ad::pm_loss(snaps, cfg.proposal.k_points, p.targets);
  } else {
    g.l_pm = tape.constant(ad::Matrix::Zero(1, 1));
  }
  g.schedule = schedule_factor(w, epoch);
  g.total = ad::add(ad::add(g.l_cls, ad::scale(g.l_dis, w.alpha)),
                    ad::add(ad::scale(g.l_dir, w.beta), ad::scale(g.l_pm, g.schedule)));
  return g;
}

LossParts parts_of(const SceneGraph& g) { return {g.l_cls.item(), g.l_dis.item(), g.l_dir.item(), g.l_pm.item()}; }

void check_finite(const LossParts& p, const std::string& where) {
  const std::pair<const char*, double> items[] = {
      {"l_cls", p.l_cls}, {"l_dis", p.l_dis}, {"l_dir", p.l_dir}, {"l_pm", p.l_pm}};
  for (const auto& [name, v] : items) {
    if (!std::isfinite(v)) throw Error("fit: non-finite " + std::string(name) + " " + where);
  }
}

struct SceneGrad {
  LossParts parts;
  std::vector<double> grad;
  std::string error;
};

SceneGrad scene_gradient(const Model& m, const std::vector<ParamRef>& refs, std::size_t n_params,
                         const Prepared& p, std::size_t epoch) {
  SceneGrad out;
  ad::Tape tape;
  const SceneGraph g = scene_graph(tape, m, p, epoch);
  out.parts = parts_of(g);
  tape.backward(g.total);
  out.grad.assign(n_params, 0.0);
  std::size_t off = 0;
  for (const ParamRef& r : refs) {
    const ad::Var v = tape.find_parameter(r.values.data());
    if (v.valid()) {
      const ad::Matrix gm = tape.grad(v);
      std::copy(gm.data(), gm.data() + gm.size(), out.grad.begin() + static_cast<std::ptrdiff_t>(off));
    }
    off += r.values.size();
  }
  return out;
}

}  // namespace

LossReport scene_loss(const Model& model, const SceneRecord& scene, std::size_t epoch) {
  const Prepared p = prepare(model.config, scene);
  ad::Tape tape;
  const SceneGraph g = scene_graph(tape, model, p, epoch);
  return total_loss(parts_of(g), model.config.loss_weights(), epoch);
}

FitResult fit(const PipelineConfig& config, std::span<const SceneRecord> scenes, const FitHooks& hooks) {
  config.validate();
  if (scenes.empty()) throw InvalidInput("fit: empty corpus");
  std::vector<Prepared> data;
  data.reserve(scenes.size());
  for (const auto& s : scenes) data.push_back(prepare(config, s));

  FitResult result;
  Model& model = result.checkpoint.model;
  model = Model::init(config);
  std::vector<ParamRef> refs = model.refs();
  std::size_t n_params = 0;
  for (const auto& r : refs) n_params += r.values.size();
  std::vector<double> velocity(n_params, 0.0);
  const LossWeights weights = config.loss_weights();
  const std::size_t workers = thread_count();

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.fit.epochs; ++epoch) {
    Rng rng(mix_seed(config.fit.seed, 1000 + epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)))]);
    }
    LossParts sum;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.fit.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.fit.batch_size);
      std::vector<SceneGrad> grads(b1 - b0);
      auto work = [&](std::size_t i) {
        try {
          grads[i] = scene_gradient(model, refs, n_params, data[order[b0 + i]], epoch);
        } catch (const std::exception& e) {
          grads[i].error = e.what();
        }
      };
      if (workers > 1 && grads.size() > 1) {
        std::vector<std::thread> pool;
        const std::size_t nt = std::min(workers, grads.size());
        for (std::size_t t = 0; t < nt; ++t) {
          pool.emplace_back([&, t] {
            for (std::size_t i = t; i < grads.size(); i += nt) work(i);
          });
        }
        for (auto& th : pool) th.join();
      } else {
        for (std::size_t i = 0; i < grads.size(); ++i) work(i);
      }

      std::vector<double> g(n_params, 0.0);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        const std::string& id = data[order[b0 + i]].scene->id;
        if (!grads[i].error.empty()) throw Error("fit: scene '" + id + "': " + grads[i].error);
        check_finite(grads[i].parts, "at epoch " + std::to_string(epoch) + ", scene '" + id + "'");
        sum.l_cls += grads[i].parts.l_cls;
        sum.l_dis += grads[i].parts.l_dis;
        sum.l_dir += grads[i].parts.l_dir;
        sum.l_pm += grads[i].parts.l_pm;
        for (std::size_t j = 0; j < n_params; ++j) g[j] += grads[i].grad[j];
      }
      const double inv = 1.0 / static_cast<double>(grads.size());
      double norm2 = 0.0;
      for (double& v : g) {
        v *= inv;
        norm2 += v * v;
      }
      if (!std::isfinite(norm2)) throw Error("fit: non-finite gradient at epoch " + std::to_string(epoch));
      double clip = 1.0;
      if (config.fit.grad_clip > 0.0 && std::sqrt(norm2) > config.fit.grad_clip) {
        clip = config.fit.grad_clip / std::sqrt(norm2);
      }
      std::size_t j = 0;
      for (ParamRef& r : refs) {
        for (double& p : r.values) {
          velocity[j] = config.fit.momentum * velocity[j] + clip * g[j];
          p = static_cast<double>(static_cast<float>(p - config.fit.learning_rate * velocity[j]));
          ++j;
        }
      }
    }
    const double n = static_cast<double>(data.size());
    const LossParts mean{sum.l_cls / n, sum.l_dis / n, sum.l_dir / n, sum.l_pm / n};
    const LossReport report = total_loss(mean, weights, epoch);
    result.curve.push_back(report);
    if (hooks.on_epoch) hooks.on_epoch(report);
  }
  result.checkpoint.metadata.epoch = config.fit.epochs;
  result.checkpoint.metadata.final_loss = result.curve.back();
  return result;
}

std::string loss_curve_csv(std::span<const LossReport> curve) {
  std::string out = "epoch,l_cls,l_dis,l_dir,l_pm,schedule_factor,total\n";
  char buf[512];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.l_cls, r.l_dis, r.l_dir,
                  r.l_pm, r.schedule_factor, r.total);
    out += buf;
  }
  return out;
}

Detection detect(const Model& model, const SceneRecord& scene) {
  if (!scene.features) throw InvalidInput("detect: scene '" + scene.id + "' has no features");
  const TensorField& f = *scene.features;
  if (f.channels() != model.config.c_channels) {
    throw ConfigError("detect: scene '" + scene.id + "' has " + std::to_string(f.channels()) +
                      " feature channels, checkpoint expects " + std::to_string(model.config.c_channels));
  }
  Detection d;
  d.scene_id = scene.id;
  d.iterations.resize(model.config.dom.t_iters + 1);
  // An all-zero feature field carries no evidence of text.
  if (std::all_of(f.data().begin(), f.data().end(), [](double v) { return v == 0.0; })) {
    d.predicted = TensorField(4, f.rows(), f.cols());
    return d;
  }
  const TamOutput out = tam_forward(f, model.tam);
  d.predicted = out.predicted;
  const std::vector<BoundaryPoints> proposals = extract_proposals(out.predicted.channel(1), model.config.proposal);
  const auto traces = dom_optimize(out.f_tam, proposals, model.dom);
  for (const auto& t : traces) {
    for (std::size_t it = 0; it < t.snapshots.size(); ++it) d.iterations[it].push_back(t.snapshots[it]);
    try {
      d.polygons.emplace_back(t.final().points());
    } catch (const InvalidInput&) {
      // collapsed ring, no usable polygon
    }
  }
  return d;
}

namespace {

nlohmann::json ring_json(std::span<const Point2> pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const Point2& p : pts) a.push_back({p.x, p.y});
  return a;
}

}  // namespace

nlohmann::json predictions_json(std::span<const Detection> detections) {
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& d : detections) {
    nlohmann::json polys = nlohmann::json::array();
    for (const auto& p : d.polygons) polys.push_back(ring_json(p.vertices()));
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : d.iterations) {
      nlohmann::json rings = nlohmann::json::array();
      for (const auto& r : it) rings.push_back(ring_json(r.points()));
      iters.push_back(std::move(rings));
    }
    scenes.push_back({{"scene_id", d.scene_id}, {"polygons", polys}, {"iterations", iters}});
  }
  return {{"scenes", scenes}};
}

std::vector<PredScene> parse_predictions_json(const nlohmann::json& j) {
  std::vector<PredScene> out;
  try {
    for (const auto& s : j.at("scenes")) {
      PredScene p;
      p.scene_id = s.at("scene_id").get<std::string>();
      for (const auto& poly : s.at("polygons")) {
        std::vector<Point2> pts;
        for (const auto& v : poly) {
          if (!v.is_array() || v.size() != 2) throw FormatError("predictions: expected [x, y] pairs");
          pts.push_back({v[0].get<double>(), v[1].get<double>()});
        }
        p.polygons.emplace_back(std::move(pts));
      }
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("predictions: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("predictions: ") + e.what());
  }
  return out;
}

}  // namespace bpdo
