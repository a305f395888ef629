#include "bpdo/dom.hpp"

#include <string>

#include "bpdo/error.hpp"

namespace bpdo {

void DomConfig::validate() const {
  if (channels == 0) throw InvalidInput("DomConfig: channels must be positive");
  if (m_heads == 0 || n_samples == 0) throw InvalidInput("DomConfig: m_heads and n_samples must be positive");
  if (hidden == 0) throw InvalidInput("DomConfig: hidden must be positive");
  if (!(r_max > 0.0)) throw InvalidInput("DomConfig: r_max must be positive");
  if (t_iters == 0) throw InvalidInput("DomConfig: t_iters must be at least 1");
}

DomParams DomParams::init(const DomConfig& config, Rng& rng) {
  config.validate();
  DomParams p;
  p.channels = config.channels;
  p.m_heads = config.m_heads;
  p.n_samples = config.n_samples;
  p.d_v = config.d_v ? config.d_v : std::max<std::size_t>(1, config.channels / config.m_heads);
  p.r_max = config.r_max;
  p.t_iters = config.t_iters;
  const std::size_t c = p.channels;
  for (std::size_t m = 0; m < p.m_heads; ++m) p.value_proj.push_back(LinearParams::random(c, p.d_v, rng));
  for (std::size_t i = 0; i < p.m_heads * p.n_samples; ++i) p.qk_weight.push_back(LinearParams::random(c, 1, rng));
  p.head_out = LinearParams::random(p.m_heads * p.d_v, c, rng);
  for (std::size_t m = 0; m < p.m_heads; ++m) {
    p.offset_head.push_back(LinearParams::random(c, 2 * p.n_samples, rng, 0.5));
  }
  p.update1 = LinearParams::random(c, config.hidden, rng);
  p.update2 = LinearParams::random(config.hidden, 2, rng, 0.1);
  return p;
}

void DomParams::validate() const {
  if (channels == 0 || m_heads == 0 || n_samples == 0 || d_v == 0) {
    throw InvalidInput("DomParams: dimensions must be positive");
  }
  if (!(r_max > 0.0)) throw InvalidInput("DomParams: r_max must be positive");
  if (t_iters == 0) throw InvalidInput("DomParams: t_iters must be at least 1");
  auto check = [](const LinearParams& l, std::size_t in, std::size_t out, const char* name) {
    l.validate();
    if (l.in_dim != in || l.out_dim != out) {
      throw InvalidInput(std::string("DomParams: ") + name + " has shape " + std::to_string(l.in_dim) +
                         " -> " + std::to_string(l.out_dim) + ", expected " + std::to_string(in) +
                         " -> " + std::to_string(out));
    }
  };
  if (value_proj.size() != m_heads) throw InvalidInput("DomParams: need one value_proj per head");
  if (qk_weight.size() != m_heads * n_samples) throw InvalidInput("DomParams: need m_heads * n_samples qk_weight");
  if (offset_head.size() != m_heads) throw InvalidInput("DomParams: need one offset_head per head");
  for (const auto& l : value_proj) check(l, channels, d_v, "value_proj");
  for (const auto& l : qk_weight) check(l, channels, 1, "qk_weight");
  for (const auto& l : offset_head) check(l, channels, 2 * n_samples, "offset_head");
  check(head_out, m_heads * d_v, channels, "head_out");
  check(update1, channels, update1.out_dim, "update1");
  check(update2, update1.out_dim, 2, "update2");
}

std::vector<ParamRef> DomParams::refs(const std::string& prefix) {
  std::vector<ParamRef> out;
  auto add = [&](const std::string& name, LinearParams& l) {
    out.push_back({name + ".weight", l.weight, static_cast<ad::Index>(l.out_dim), static_cast<ad::Index>(l.in_dim)});
    out.push_back({name + ".bias", l.bias, 1, static_cast<ad::Index>(l.out_dim)});
  };
  for (std::size_t m = 0; m < value_proj.size(); ++m) add(prefix + ".value_proj." + std::to_string(m), value_proj[m]);
  for (std::size_t i = 0; i < qk_weight.size(); ++i) add(prefix + ".qk_weight." + std::to_string(i), qk_weight[i]);
  add(prefix + ".head_out", head_out);
  for (std::size_t m = 0; m < offset_head.size(); ++m) add(prefix + ".offset_head." + std::to_string(m), offset_head[m]);
  add(prefix + ".update1", update1);
  add(prefix + ".update2", update2);
  return out;
}

std::vector<DomParams> init_dom_stages(const DomConfig& config, Rng& rng) {
  config.validate();
  std::vector<DomParams> stages;
  const std::size_t n = config.share_iterations ? 1 : config.t_iters;
  for (std::size_t i = 0; i < n; ++i) stages.push_back(DomParams::init(config, rng));
  return stages;
}

namespace ad {

Var grouped_affine(Var x, Var w, Var b, Index groups, Index run) {
  if (groups <= 0 || run <= 0) throw InvalidInput("grouped_affine: groups and run must be positive");
  if (w.rows() % groups != 0 || w.cols() != x.cols()) throw InvalidInput("grouped_affine: weight shape");
  if (b.value().size() != w.rows()) throw InvalidInput("grouped_affine: bias length");
  const Index out_dim = w.rows() / groups;
  Tape& t = x.tape();
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  const Eigen::Map<const Eigen::RowVectorXd> bv(b.value().data(), b.value().size());
  Matrix out(xv.rows(), out_dim);
  for (Index r = 0; r < xv.rows(); ++r) {
    const Index g = (r / run) % groups;
    out.row(r).noalias() = xv.row(r) * wv.middleRows(g * out_dim, out_dim).transpose();
    out.row(r) += bv.segment(g * out_dim, out_dim);
  }
  return t.record(std::move(out), {x, w, b}, [&t, x, w, b, groups, run, out_dim](const Matrix& g, const Matrix&) {
    const Matrix& xv = x.value();
    const Matrix& wv = w.value();
    Matrix* dx = t.requires_grad(x) ? &t.grad_buffer(x) : nullptr;
    Matrix* dw = t.requires_grad(w) ? &t.grad_buffer(w) : nullptr;
    double* db = t.requires_grad(b) ? t.grad_buffer(b).data() : nullptr;
    for (Index r = 0; r < xv.rows(); ++r) {
      const Index grp = (r / run) % groups;
      if (dx) dx->row(r).noalias() += g.row(r) * wv.middleRows(grp * out_dim, out_dim);
      if (dw) dw->middleRows(grp * out_dim, out_dim).noalias() += g.row(r).transpose() * xv.row(r);
      if (db) {
        for (Index j = 0; j < out_dim; ++j) db[grp * out_dim + j] += g(r, j);
      }
    }
  });
}

Var attend(Var w, Var v, Index groups, Index run) {
  const Index n = w.rows();
  if (w.cols() != groups * run) throw InvalidInput("attend: weight width != groups * run");
  if (v.rows() != n * groups * run) throw InvalidInput("attend: value rows != n * groups * run");
  const Index d = v.cols();
  Tape& t = w.tape();
  const Matrix& wv = w.value();
  const Matrix& vv = v.value();
  Matrix out = Matrix::Zero(n, groups * d);
  for (Index i = 0; i < n; ++i) {
    for (Index g = 0; g < groups; ++g) {
      for (Index s = 0; s < run; ++s) {
        out.row(i).segment(g * d, d) += wv(i, g * run + s) * vv.row((i * groups + g) * run + s);
      }
    }
  }
  return t.record(std::move(out), {w, v}, [&t, w, v, groups, run, n, d](const Matrix& grad, const Matrix&) {
    const Matrix& wv = w.value();
    const Matrix& vv = v.value();
    Matrix* dw = t.requires_grad(w) ? &t.grad_buffer(w) : nullptr;
    Matrix* dv = t.requires_grad(v) ? &t.grad_buffer(v) : nullptr;
    for (Index i = 0; i < n; ++i) {
      for (Index g = 0; g < groups; ++g) {
        const auto gs = grad.row(i).segment(g * d, d);
        for (Index s = 0; s < run; ++s) {
          const Index row = (i * groups + g) * run + s;
          if (dw) (*dw)(i, g * run + s) += gs.dot(vv.row(row));
          if (dv) dv->row(row) += wv(i, g * run + s) * gs;
        }
      }
    }
  });
}

}  // namespace ad

DomVars bind_dom(ad::Tape& tape, const DomParams& p) {
  p.validate();
  auto w_of = [&](const LinearParams& l) {
    return tape.parameter(l.weight, static_cast<ad::Index>(l.out_dim), static_cast<ad::Index>(l.in_dim));
  };
  auto b_of = [&](const LinearParams& l) { return tape.parameter(l.bias, 1, static_cast<ad::Index>(l.out_dim)); };
  auto stack = [&](const std::vector<LinearParams>& ls, ad::Var& w, ad::Var& b) {
    std::vector<ad::Var> ws, bs;
    for (const auto& l : ls) {
      ws.push_back(w_of(l));
      bs.push_back(b_of(l));
    }
    w = ws.size() == 1 ? ws[0] : ad::concat_rows(ws);
    b = bs.size() == 1 ? bs[0] : ad::concat_cols(bs);
  };
  DomVars v;
  v.params = &p;
  stack(p.value_proj, v.w_val, v.b_val);
  stack(p.qk_weight, v.w_qk, v.b_qk);
  stack(p.offset_head, v.w_off, v.b_off);
  v.w_out = w_of(p.head_out);
  v.b_out = b_of(p.head_out);
  v.w_u1 = w_of(p.update1);
  v.b_u1 = b_of(p.update1);
  v.w_u2 = w_of(p.update2);
  v.b_u2 = b_of(p.update2);
  return v;
}

DomStepGraph dom_step(ad::Var f_tam, ad::GridShape grid, ad::Var points, const DomVars& vars) {
  const DomParams& p = *vars.params;
  if (f_tam.rows() != static_cast<ad::Index>(p.channels)) {
    throw InvalidInput("dom: feature field has " + std::to_string(f_tam.rows()) + " channels, parameters expect " +
                       std::to_string(p.channels));
  }
  const auto m = static_cast<ad::Index>(p.m_heads);
  const auto ns = static_cast<ad::Index>(p.n_samples);
  const ad::Index n = points.rows();
  DomStepGraph g;
  ad::Var q = ad::bilinear_sample(f_tam, grid, points);
  ad::Var raw_off = ad::affine_rows(q, vars.w_off, vars.b_off);
  g.offsets = ad::scale(ad::tanh(ad::reshape(raw_off, n * m * ns, 2)), p.r_max);
  ad::Var sample_at = ad::add(ad::repeat_rows(points, m * ns), g.offsets);
  ad::Var sampled = ad::bilinear_sample(f_tam, grid, sample_at);
  ad::Var values = ad::grouped_affine(sampled, vars.w_val, vars.b_val, m, ns);
  g.weights = ad::softmax_groups(ad::affine_rows(q, vars.w_qk, vars.b_qk), ns);
  ad::Var heads = ad::attend(g.weights, values, m, ns);
  g.f_da = ad::affine_rows(heads, vars.w_out, vars.b_out);
  ad::Var hidden = ad::relu(ad::affine_rows(g.f_da, vars.w_u1, vars.b_u1));
  g.update = ad::scale(ad::tanh(ad::affine_rows(hidden, vars.w_u2, vars.b_u2)), p.r_max);
  g.next = ad::add(points, g.update);
  return g;
}

std::vector<ad::Var> dom_optimize(ad::Var f_tam, ad::GridShape grid, ad::Var points,
                                  std::span<const DomVars> stages, std::size_t t_iters) {
  if (stages.empty()) throw InvalidInput("dom_optimize: no parameter stages");
  if (stages.size() != 1 && stages.size() != t_iters) {
    throw InvalidInput("dom_optimize: need one shared stage or one per iteration");
  }
  if (t_iters == 0) throw InvalidInput("dom_optimize: t_iters must be at least 1");
  std::vector<ad::Var> out;
  ad::Var cur = points;
  for (std::size_t it = 0; it < t_iters; ++it) {
    cur = dom_step(f_tam, grid, cur, stages[stages.size() == 1 ? 0 : it]).next;
    out.push_back(cur);
  }
  return out;
}

ad::Matrix points_matrix(std::span<const BoundaryPoints> rings) {
  ad::Index n = 0;
  for (const auto& r : rings) n += static_cast<ad::Index>(r.k());
  ad::Matrix m(n, 2);
  ad::Index i = 0;
  for (const auto& r : rings) {
    for (const Point2& p : r.points()) {
      m(i, 0) = p.x;
      m(i, 1) = p.y;
      ++i;
    }
  }
  return m;
}

std::vector<BoundaryPoints> split_points(const ad::Matrix& m, std::size_t k) {
  if (k == 0 || m.cols() != 2 || static_cast<std::size_t>(m.rows()) % k != 0) {
    throw InvalidInput("split_points: rows must be a multiple of k");
  }
  std::vector<BoundaryPoints> out;
  for (ad::Index r0 = 0; r0 < m.rows(); r0 += static_cast<ad::Index>(k)) {
    std::vector<Point2> pts;
    for (ad::Index r = r0; r < r0 + static_cast<ad::Index>(k); ++r) pts.push_back({m(r, 0), m(r, 1)});
    out.emplace_back(std::move(pts));
  }
  return out;
}

namespace {

void check_field(const TensorField& f, const DomParams& p) {
  if (f.empty()) throw InvalidInput("dom: empty feature field");
  if (f.channels() != p.channels) {
    throw InvalidInput("dom: feature field has " + std::to_string(f.channels()) + " channels, parameters expect " +
                       std::to_string(p.channels));
  }
}

void check_point(Point2 p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidInput("dom: non-finite point");
}

struct Single {
  ad::Tape tape;
  DomStepGraph g;
  Single(const TensorField& f, Point2 pt, const DomParams& params) {
    check_field(f, params);
    check_point(pt);
    const DomVars v = bind_dom(tape, params);
    ad::Matrix pm(1, 2);
    pm << pt.x, pt.y;
    g = dom_step(tape.constant(ad::field_matrix(f)), ad::grid_of(f), tape.constant(pm), v);
  }
};

}  // namespace

std::vector<Point2> predict_offsets(const TensorField& f_tam, Point2 p, const DomParams& params) {
  Single s(f_tam, p, params);
  const ad::Matrix& o = s.g.offsets.value();
  std::vector<Point2> out;
  for (ad::Index r = 0; r < o.rows(); ++r) out.push_back({o(r, 0), o(r, 1)});
  return out;
}

AttentionTrace deformable_attention_trace(const TensorField& f_tam, Point2 p, const DomParams& params) {
  Single s(f_tam, p, params);
  AttentionTrace t;
  const ad::Matrix& f = s.g.f_da.value();
  t.f_da.assign(f.data(), f.data() + f.size());
  const ad::Matrix& o = s.g.offsets.value();
  for (ad::Index r = 0; r < o.rows(); ++r) t.offsets.push_back({o(r, 0), o(r, 1)});
  const ad::Matrix& w = s.g.weights.value();
  t.weights.assign(w.data(), w.data() + w.size());
  return t;
}

std::vector<double> deformable_attention(const TensorField& f_tam, Point2 p, const DomParams& params) {
  return deformable_attention_trace(f_tam, p, params).f_da;
}

BoundaryPoints dom_step(const TensorField& f_tam, const BoundaryPoints& pts, const DomParams& params) {
  check_field(f_tam, params);
  if (pts.k() == 0) throw InvalidInput("dom_step: empty point ring");
  ad::Tape tape;
  const DomVars v = bind_dom(tape, params);
  const BoundaryPoints rings[] = {pts};
  const auto g = dom_step(tape.constant(ad::field_matrix(f_tam)), ad::grid_of(f_tam),
                          tape.constant(points_matrix(rings)), v);
  return split_points(g.next.value(), pts.k()).front();
}

std::vector<DomTrace> dom_optimize(const TensorField& f_tam, std::span<const BoundaryPoints> proposals,
                                   std::span<const DomParams> stages) {
  if (stages.empty()) throw InvalidInput("dom_optimize: no parameter stages");
  for (const auto& s : stages) check_field(f_tam, s);
  const std::size_t t_iters = stages.front().t_iters;
  std::vector<DomTrace> out(proposals.size());
  if (proposals.empty()) return out;
  const std::size_t k = proposals.front().k();
  for (const auto& p : proposals) {
    if (p.k() != k) throw InvalidInput("dom_optimize: proposals must share the same point count");
  }
  ad::Tape tape;
  std::vector<DomVars> vars;
  for (const auto& s : stages) vars.push_back(bind_dom(tape, s));
  const ad::Var pts = tape.constant(points_matrix(proposals));
  const auto snaps = dom_optimize(tape.constant(ad::field_matrix(f_tam)), ad::grid_of(f_tam), pts, vars, t_iters);
  for (std::size_t i = 0; i < proposals.size(); ++i) out[i].snapshots.push_back(proposals[i]);
  for (const auto& s : snaps) {
    auto rings = split_points(s.value(), k);
    for (std::size_t i = 0; i < proposals.size(); ++i) out[i].snapshots.push_back(std::move(rings[i]));
  }
  return out;
}

std::vector<DomTrace> dom_optimize(const TensorField& f_tam, std::span<const BoundaryPoints> proposals,
                                   const DomParams& params) {
  return dom_optimize(f_tam, proposals, std::span<const DomParams>(&params, 1));
}

DomTrace dom_optimize(const TensorField& f_tam, const BoundaryPoints& proposal, std::span<const DomParams> stages) {
  return dom_optimize(f_tam, std::span<const BoundaryPoints>(&proposal, 1), stages).front();
}

}  // namespace bpdo
