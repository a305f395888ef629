#include "bpdo/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bpdo/error.hpp"

namespace bpdo {

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw InvalidInput("LossWeights: alpha, beta and gamma must be non-negative");
  }
  if (eps_epochs < 1) throw InvalidInput("LossWeights: eps_epochs must be at least 1");
}

namespace {

void same_shape(const TensorField& a, const TensorField& b, const char* op) {
  if (a.channels() != b.channels() || a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch");
  }
}

ad::Matrix row_of(const TensorField& f) {
  return Eigen::Map<const ad::Matrix>(f.data().data(), 1, static_cast<ad::Index>(f.size()));
}

double scalar(ad::Var v) { return v.item(); }

}  // namespace

double cls_loss(const TensorField& pred, const TensorField& gt) {
  same_shape(pred, gt, "cls_loss");
  if (pred.empty()) throw InvalidInput("cls_loss: empty maps");
  ad::Tape t;
  return scalar(ad::bce_mean(t.constant(row_of(pred)), row_of(gt)));
}

double dis_loss(const TensorField& pred, const TensorField& gt, const TensorField& cls, bool include_background) {
  same_shape(pred, gt, "dis_loss");
  same_shape(pred, cls, "dis_loss");
  ad::Tape t;
  const ad::Matrix mask = include_background ? ad::Matrix::Ones(1, static_cast<ad::Index>(pred.size())) : row_of(cls);
  return scalar(ad::masked_mse(t.constant(row_of(pred)), row_of(gt), mask));
}

double dir_loss(const TensorField& px, const TensorField& py, const TensorField& gx, const TensorField& gy,
                const TensorField& cls) {
  same_shape(px, py, "dir_loss");
  same_shape(px, gx, "dir_loss");
  same_shape(px, gy, "dir_loss");
  same_shape(px, cls, "dir_loss");
  const auto n = static_cast<ad::Index>(px.size());
  ad::Matrix pred(2, n), target(2, n);
  pred.row(0) = row_of(px);
  pred.row(1) = row_of(py);
  target.row(0) = row_of(gx);
  target.row(1) = row_of(gy);
  ad::Tape t;
  return scalar(ad::direction_loss(t.constant(pred), target, row_of(cls)));
}

Alignment best_alignment(std::span<const Point2> pred, std::span<const Point2> target) {
  const std::size_t k = pred.size();
  if (k == 0 || target.size() != k) throw InvalidInput("best_alignment: rings must be non-empty and equal length");
  Alignment best;
  bool have = false;
  for (int rev = 0; rev < 2; ++rev) {
    for (std::size_t s = 0; s < k; ++s) {
      const Alignment a{s, rev == 1, 0.0};
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const Point2 q = target[aligned_index(a, i, k)];
        const double dx = pred[i].x - q.x;
        const double dy = pred[i].y - q.y;
        sum += dx * dx + dy * dy;
      }
      const double cost = sum / static_cast<double>(k);
      if (!have || cost < best.cost) {
        best = {s, rev == 1, cost};
        have = true;
      }
    }
  }
  return best;
}

double pm_loss(std::span<const BoundaryPoints> snapshots, const Polygon& gt_poly, std::size_t k) {
  if (snapshots.empty()) throw InvalidInput("pm_loss: no snapshots");
  if (k < 3) throw InvalidInput("pm_loss: k must be at least 3");
  const BoundaryPoints target = resample_polygon(gt_poly, k);
  double sum = 0.0;
  for (const auto& s : snapshots) {
    if (s.k() != k) throw InvalidInput("pm_loss: snapshot has " + std::to_string(s.k()) + " points, expected " + std::to_string(k));
    sum += best_alignment(s.points(), target.points()).cost;
  }
  return sum / static_cast<double>(snapshots.size());
}

double schedule_factor(const LossWeights& w, std::size_t epoch) {
  w.validate();
  const double eps = static_cast<double>(w.eps_epochs);
  return w.gamma / (1.0 + std::exp((static_cast<double>(epoch) - eps) / eps));
}

LossReport total_loss(const LossParts& parts, const LossWeights& w, std::size_t epoch) {
  w.validate();
  if (epoch > w.eps_epochs) {
    throw InvalidInput("total_loss: epoch " + std::to_string(epoch) + " beyond eps_epochs " + std::to_string(w.eps_epochs));
  }
  LossReport r;
  r.l_cls = parts.l_cls;
  r.l_dis = parts.l_dis;
  r.l_dir = parts.l_dir;
  r.l_pm = parts.l_pm;
  r.epoch = epoch;
  r.schedule_factor = schedule_factor(w, epoch);
  r.total = r.l_cls + w.alpha * r.l_dis + w.beta * r.l_dir + r.schedule_factor * r.l_pm;
  return r;
}

namespace ad {

namespace {
Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}
}  // namespace

Var bce_mean(Var pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw InvalidInput("bce_mean: shape mismatch");
  if (pred.value().size() == 0) throw InvalidInput("bce_mean: empty input");
  Tape& t = pred.tape();
  const double n = static_cast<double>(target.size());
  const Matrix& p = pred.value();
  double sum = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p.data()[i], kBceClamp, 1.0 - kBceClamp);
    const double y = target.data()[i];
    sum -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  return t.record(scalar_matrix(sum / n), {pred}, [&t, pred, target, n](const Matrix& g, const Matrix&) {
    Matrix& d = t.grad_buffer(pred);
    const Matrix& p = pred.value();
    for (Index i = 0; i < p.size(); ++i) {
      const double raw = p.data()[i];
      if (raw < kBceClamp || raw > 1.0 - kBceClamp) continue;
      const double y = target.data()[i];
      d.data()[i] += g(0, 0) * (-y / raw + (1.0 - y) / (1.0 - raw)) / n;
    }
  });
}

Var masked_mse(Var pred, const Matrix& target, const Matrix& mask) {
  if (pred.value().size() != target.size() || mask.size() != target.size()) {
    throw InvalidInput("masked_mse: shape mismatch");
  }
  Tape& t = pred.tape();
  const Matrix& p = pred.value();
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < p.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    const double d = p.data()[i] - target.data()[i];
    sum += d * d;
    ++count;
  }
  const double n = count ? static_cast<double>(count) : 1.0;
  return t.record(scalar_matrix(sum / n), {pred}, [&t, pred, target, mask, n](const Matrix& g, const Matrix&) {
    Matrix& d = t.grad_buffer(pred);
    const Matrix& p = pred.value();
    for (Index i = 0; i < p.size(); ++i) {
      if (mask.data()[i] != 0.0) d.data()[i] += g(0, 0) * 2.0 * (p.data()[i] - target.data()[i]) / n;
    }
  });
}

Var direction_loss(Var pred, const Matrix& target, const Matrix& mask) {
  if (pred.rows() != 2 || target.rows() != 2 || pred.cols() != target.cols() || mask.size() != target.cols()) {
    throw InvalidInput("direction_loss: expected 2 x hw prediction and target with hw mask entries");
  }
  Tape& t = pred.tape();
  const Matrix& p = pred.value();
  double sum = 0.0;
  Index count = 0;
  for (Index j = 0; j < p.cols(); ++j) {
    if (mask.data()[j] == 0.0) continue;
    ++count;
    const double pn = std::hypot(p(0, j), p(1, j));
    const double gn = std::hypot(target(0, j), target(1, j));
    double cos = 0.0;
    if (pn >= kDirectionNormFloor && gn >= kDirectionNormFloor) {
      cos = (p(0, j) * target(0, j) + p(1, j) * target(1, j)) / (pn * gn);
    }
    sum += (pn - gn) * (pn - gn) + (1.0 - cos);
  }
  const double n = count ? static_cast<double>(count) : 1.0;
  return t.record(scalar_matrix(sum / n), {pred}, [&t, pred, target, mask, n](const Matrix& g, const Matrix&) {
    Matrix& d = t.grad_buffer(pred);
    const Matrix& p = pred.value();
    const double scale = g(0, 0) / n;
    for (Index j = 0; j < p.cols(); ++j) {
      if (mask.data()[j] == 0.0) continue;
      const double px = p(0, j), py = p(1, j);
      const double gx = target(0, j), gy = target(1, j);
      const double pn = std::hypot(px, py);
      const double gn = std::hypot(gx, gy);
      if (pn < kDirectionNormFloor) continue;
      double dx = 2.0 * (pn - gn) * px / pn;
      double dy = 2.0 * (pn - gn) * py / pn;
      if (gn >= kDirectionNormFloor) {
        const double dot = px * gx + py * gy;
        const double inv = 1.0 / (pn * gn);
        const double inv3 = dot / (pn * pn * pn * gn);
        dx -= gx * inv - px * inv3;
        dy -= gy * inv - py * inv3;
      }
      d(0, j) += scale * dx;
      d(1, j) += scale * dy;
    }
  });
}

Var pm_loss(std::span<const Var> snapshots, std::size_t k, std::span<const std::vector<Point2>> targets) {
  if (snapshots.empty()) throw InvalidInput("pm_loss: no snapshots");
  if (k == 0) throw InvalidInput("pm_loss: k must be positive");
  Tape& t = snapshots.front().tape();
  const auto rings = targets.size();
  for (const Var& s : snapshots) {
    if (s.cols() != 2 || static_cast<std::size_t>(s.rows()) != rings * k) {
      throw InvalidInput("pm_loss: snapshot must be (rings * k) x 2");
    }
  }
  std::size_t supervised = 0;
  for (const auto& tg : targets) {
    if (tg.empty()) continue;
    if (tg.size() != k) throw InvalidInput("pm_loss: target ring size != k");
    ++supervised;
  }
  if (supervised == 0) return t.constant(scalar_matrix(0.0));

  // Matched target coordinates per snapshot, aligned with its rows.
  std::vector<Matrix> matched;
  std::vector<Var> parents;
  double sum = 0.0;
  std::vector<Point2> ring(k);
  for (const Var& s : snapshots) {
    const Matrix& v = s.value();
    Matrix m = v;
    for (std::size_t r = 0; r < rings; ++r) {
      if (targets[r].empty()) continue;
      for (std::size_t i = 0; i < k; ++i) {
        const auto row = static_cast<Index>(r * k + i);
        ring[i] = {v(row, 0), v(row, 1)};
      }
      const Alignment a = best_alignment(ring, targets[r]);
      sum += a.cost;
      for (std::size_t i = 0; i < k; ++i) {
        const Point2 q = targets[r][aligned_index(a, i, k)];
        const auto row = static_cast<Index>(r * k + i);
        m(row, 0) = q.x;
        m(row, 1) = q.y;
      }
    }
    matched.push_back(std::move(m));
    parents.push_back(s);
  }
  const double denom = static_cast<double>(supervised * snapshots.size());
  std::vector<std::uint8_t> active(rings, 0);
  for (std::size_t r = 0; r < rings; ++r) active[r] = targets[r].empty() ? 0 : 1;
  return t.record(scalar_matrix(sum / denom), parents,
                  [&t, parents, matched = std::move(matched), active, k, denom](const Matrix& g, const Matrix&) {
                    const double scale = g(0, 0) * 2.0 / (static_cast<double>(k) * denom);
                    for (std::size_t s = 0; s < parents.size(); ++s) {
                      if (!t.requires_grad(parents[s])) continue;
                      Matrix& d = t.grad_buffer(parents[s]);
                      const Matrix& v = parents[s].value();
                      for (std::size_t r = 0; r < active.size(); ++r) {
                        if (!active[r]) continue;
                        const auto r0 = static_cast<Index>(r * k);
                        const auto kk = static_cast<Index>(k);
                        d.middleRows(r0, kk) += scale * (v.middleRows(r0, kk) - matched[s].middleRows(r0, kk));
                      }
                    }
                  });
}

}  // namespace ad

}  // namespace bpdo
