#include "bpdo/error.hpp"
#include "bpdo/pipeline.hpp"
#include "bpdo/random.hpp"

namespace bpdo {

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

ad::Matrix random_matrix(Rng& rng, ad::Index rows, ad::Index cols, double lo, double hi) {
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Mean of x weighted elementwise by a fixed random matrix.
ad::Var readout(ad::Tape& t, ad::Var x, const ad::Matrix& w) { return ad::mean(ad::mul(x, t.constant(w))); }

GradCheckReport linear_sigmoid(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 1));
  LinearParams lin = LinearParams::random(5, 3, rng);
  std::vector<double> x = random_values(rng, 5, -1.0, 1.0);
  const ad::Matrix w = random_matrix(rng, 1, 3, -1.0, 1.0);
  const std::vector<ParamRef> refs = {
      {"weight", lin.weight, 3, 5}, {"bias", lin.bias, 1, 3}, {"input", x, 1, 5}};
  return grad_check(
      "linear_sigmoid",
      [&](ad::Tape& t) { return readout(t, ad::sigmoid(ad::affine_rows(bind(t, refs[2]), bind(t, refs[0]), bind(t, refs[1]))), w); },
      refs);
}

struct TamProblem {
  TamParams params;
  std::vector<double> field;
  ad::GridShape grid{6, 7};
  ad::Matrix w_pred, w_feat;

  explicit TamProblem(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 2));
    TamConfig cfg;
    cfg.channels = 4;
    params = TamParams::init(cfg, rng);
    for (double& b : params.ch_conv1.bias) b = rng.uniform(-0.3, 0.3);
    params.pos_conv.bias[0] = 0.2;
    field = random_values(rng, 4 * static_cast<std::size_t>(grid.size()), -1.0, 1.0);
    w_pred = random_matrix(rng, 4, grid.size(), -1.0, 1.0);
    w_feat = random_matrix(rng, 4, grid.size(), -1.0, 1.0);
  }
};

GradCheckReport tam_check(std::uint64_t seed) {
  TamProblem pb(seed);
  std::vector<ParamRef> refs = pb.params.refs();
  refs.push_back({"rv", pb.field, 4, pb.grid.size()});
  return grad_check(
      "tam_forward",
      [&](ad::Tape& t) {
        const TamVars v = bind_tam(t, pb.params);
        const TamGraph g = tam_forward(bind(t, refs.back()), pb.grid, v);
        return ad::add(readout(t, g.predicted, pb.w_pred), readout(t, g.f_tam, pb.w_feat));
      },
      refs);
}

GradCheckReport tam_fuse_check(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 3));
  const ad::Index c = 3, hw = 10;
  std::vector<double> rv = random_values(rng, c * hw, -1, 1), wc = random_values(rng, c, 0.1, 0.9),
                      wp = random_values(rng, hw, 0.1, 0.9), w = random_values(rng, c * 3 * c, -1, 1),
                      b = random_values(rng, c, -1, 1);
  const ad::Matrix out_w = random_matrix(rng, c, hw, -1, 1);
  const std::vector<ParamRef> refs = {
      {"rv", rv, c, hw}, {"wc", wc, 1, c}, {"wp", wp, 1, hw}, {"weight", w, c, 3 * c}, {"bias", b, 1, c}};
  return grad_check(
      "tam_fuse",
      [&](ad::Tape& t) {
        return readout(t, ad::tam_fuse(bind(t, refs[0]), bind(t, refs[1]), bind(t, refs[2]), bind(t, refs[3]), bind(t, refs[4])), out_w);
      },
      refs);
}

struct DomProblem {
  DomParams params;
  std::vector<double> field;
  ad::GridShape grid{8, 8};
  std::vector<double> points;
  ad::Index n_points = 0;

  DomProblem(std::uint64_t seed, std::size_t k) {
    Rng rng(mix_seed(seed, 4));
    DomConfig cfg;
    cfg.channels = 4;
    cfg.m_heads = 2;
    cfg.n_samples = 3;
    cfg.hidden = 6;
    cfg.r_max = 1.5;
    cfg.t_iters = 2;
    params = DomParams::init(cfg, rng);
    params.update2 = LinearParams::random(cfg.hidden, 2, rng, 1.0);
    for (auto& l : params.offset_head) {
      for (double& b : l.bias) b = rng.uniform(-0.5, 0.5);
    }
    for (double& b : params.update1.bias) b = rng.uniform(0.0, 0.3);
    field = random_values(rng, 4 * 64, -1.0, 1.0);
    n_points = static_cast<ad::Index>(k);
    for (std::size_t i = 0; i < k; ++i) {
      points.push_back(rng.uniform(2.2, 5.8));
      points.push_back(rng.uniform(2.2, 5.8));
    }
  }
};

GradCheckReport deformable_attention_check(std::uint64_t seed) {
  DomProblem pb(seed, 3);
  Rng rng(mix_seed(seed, 5));
  const ad::Matrix w = random_matrix(rng, 3, 4, -1.0, 1.0);
  std::vector<ParamRef> refs = pb.params.refs();
  refs.push_back({"f_tam", pb.field, 4, 64});
  refs.push_back({"points", pb.points, pb.n_points, 2});
  return grad_check(
      "deformable_attention",
      [&](ad::Tape& t) {
        const DomVars v = bind_dom(t, pb.params);
        const DomStepGraph g = dom_step(bind(t, refs[refs.size() - 2]), pb.grid, bind(t, refs.back()), v);
        return readout(t, g.f_da, w);
      },
      refs);
}

GradCheckReport dom_chain_check(std::uint64_t seed) {
  DomProblem pb(seed, 4);
  Rng rng(mix_seed(seed, 6));
  const ad::Matrix w1 = random_matrix(rng, 4, 2, -1.0, 1.0);
  const ad::Matrix w2 = random_matrix(rng, 4, 2, -1.0, 1.0);
  std::vector<ParamRef> refs = pb.params.refs();
  refs.push_back({"f_tam", pb.field, 4, 64});
  refs.push_back({"points", pb.points, pb.n_points, 2});
  return grad_check(
      "dom_optimize",
      [&](ad::Tape& t) {
        const DomVars v[] = {bind_dom(t, pb.params)};
        const auto snaps = dom_optimize(bind(t, refs[refs.size() - 2]), pb.grid, bind(t, refs.back()), v, 2);
        return ad::add(readout(t, snaps[0], w1), readout(t, snaps[1], w2));
      },
      refs);
}

struct LossProblem {
  static constexpr ad::Index kCells = 24;
  std::vector<double> logits, dist, dir;
  ad::Matrix gt_cls, gt_dist, gt_dir, mask;
  std::vector<double> ring_a, ring_b;
  std::vector<std::vector<Point2>> targets;

  explicit LossProblem(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 7));
    logits = random_values(rng, kCells, -2.0, 2.0);
    dist = random_values(rng, kCells, 0.0, 1.0);
    dir = random_values(rng, 2 * kCells, -1.0, 1.0);
    gt_cls.resize(1, kCells);
    gt_dist.resize(1, kCells);
    gt_dir.resize(2, kCells);
    for (ad::Index i = 0; i < kCells; ++i) {
      gt_cls(0, i) = rng.uniform() < 0.6 ? 1.0 : 0.0;
      gt_dist(0, i) = gt_cls(0, i) * rng.uniform();
      const double a = rng.uniform(0.0, 6.283185307179586);
      gt_dir(0, i) = gt_cls(0, i) * std::cos(a);
      gt_dir(1, i) = gt_cls(0, i) * std::sin(a);
    }
    mask = gt_cls;
    const std::size_t k = 6;
    std::vector<Point2> a, b;
    for (std::size_t ring = 0; ring < 2; ++ring) {
      std::vector<Point2> tg;
      for (std::size_t i = 0; i < k; ++i) {
        const double ang = 6.283185307179586 * static_cast<double>(i) / static_cast<double>(k);
        tg.push_back({10.0 * static_cast<double>(ring) + 3.0 * std::cos(ang), 3.0 * std::sin(ang)});
      }
      for (std::size_t i = 0; i < k; ++i) {
        const Point2 q = tg[(i + 2) % k];
        ring_a.push_back(q.x + rng.uniform(-0.8, 0.8));
        ring_a.push_back(q.y + rng.uniform(-0.8, 0.8));
        ring_b.push_back(q.x + rng.uniform(-0.5, 0.5));
        ring_b.push_back(q.y + rng.uniform(-0.5, 0.5));
      }
      targets.push_back(tg);
    }
  }
};

std::vector<GradCheckReport> loss_checks(std::uint64_t seed) {
  LossProblem pb(seed);
  const ad::Index n = LossProblem::kCells;
  const ParamRef logits{"logits", pb.logits, 1, n};
  const ParamRef dist{"dist", pb.dist, 1, n};
  const ParamRef dir{"dir", pb.dir, 2, n};
  const ParamRef ring_a{"snapshot0", pb.ring_a, 12, 2};
  const ParamRef ring_b{"snapshot1", pb.ring_b, 12, 2};

  auto cls = [&](ad::Tape& t) { return ad::bce_mean(ad::sigmoid(bind(t, logits)), pb.gt_cls); };
  auto dis = [&](ad::Tape& t) { return ad::masked_mse(bind(t, dist), pb.gt_dist, pb.mask); };
  auto dirf = [&](ad::Tape& t) { return ad::direction_loss(bind(t, dir), pb.gt_dir, pb.mask); };
  auto pm = [&](ad::Tape& t) {
    const ad::Var s[] = {bind(t, ring_a), bind(t, ring_b)};
    return ad::pm_loss(s, 6, pb.targets);
  };
  LossWeights w;
  w.eps_epochs = 10;
  const double sf = schedule_factor(w, 3);

  std::vector<GradCheckReport> out;
  out.push_back(grad_check("cls_loss", cls, std::vector<ParamRef>{logits}));
  out.push_back(grad_check("dis_loss", dis, std::vector<ParamRef>{dist}));
  out.push_back(grad_check("dir_loss", dirf, std::vector<ParamRef>{dir}));
  out.push_back(grad_check("pm_loss", pm, std::vector<ParamRef>{ring_a, ring_b}));
  out.push_back(grad_check(
      "total_loss",
      [&](ad::Tape& t) {
        return ad::add(ad::add(cls(t), ad::scale(dis(t), w.alpha)), ad::add(ad::scale(dirf(t), w.beta), ad::scale(pm(t), sf)));
      },
      std::vector<ParamRef>{logits, dist, dir, ring_a, ring_b}));
  return out;
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(const std::string& suite, std::uint64_t seed) {
  std::vector<GradCheckReport> out;
  const bool all = suite == "all";
  if (!all && suite != "tam" && suite != "dom" && suite != "loss") {
    throw InvalidInput("unknown gradcheck suite '" + suite + "' (expected tam, dom, loss or all)");
  }
  if (all) out.push_back(linear_sigmoid(seed));
  if (all || suite == "tam") {
    out.push_back(tam_fuse_check(seed));
    out.push_back(tam_check(seed));
  }
  if (all || suite == "dom") {
    out.push_back(deformable_attention_check(seed));
    out.push_back(dom_chain_check(seed));
  }
  if (all || suite == "loss") {
    for (auto& r : loss_checks(seed)) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bpdo
