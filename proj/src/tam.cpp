#include "bpdo/tam.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "bpdo/error.hpp"

namespace bpdo {

namespace {

Conv2dParams random_kernel(std::size_t k, Rng& rng) {
  Conv2dParams p;
  p.k = k;
  p.kernel.resize(k * k);
  const double limit = std::sqrt(3.0 / static_cast<double>(k * k));
  for (double& v : p.kernel) v = rng.uniform(-limit, limit);
  return p;
}

void check_kernel(const Conv2dParams& p, const char* name) {
  if (p.k == 0 || p.k % 2 == 0 || p.kernel.size() != p.k * p.k || p.bias.size() != 1) {
    throw InvalidInput(std::string("TamParams: malformed ") + name + " kernel");
  }
}

ParamRef ref(const std::string& name, std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return {name, v, static_cast<ad::Index>(rows), static_cast<ad::Index>(cols)};
}

void add_linear(std::vector<ParamRef>& out, const std::string& name, LinearParams& p) {
  out.push_back(ref(name + ".weight", p.weight, p.out_dim, p.in_dim));
  out.push_back(ref(name + ".bias", p.bias, 1, p.out_dim));
}

}  // namespace

TamParams TamParams::init(const TamConfig& config, Rng& rng) {
  if (config.channels == 0) throw InvalidInput("TamConfig: channels must be positive");
  const std::size_t c = config.channels;
  const std::size_t hidden = config.hidden ? config.hidden : std::max<std::size_t>(1, c / 2);
  TamParams p;
  p.channels = c;
  p.ch_conv1 = LinearParams::random(c, hidden, rng);
  p.ch_conv2 = LinearParams::random(hidden, c, rng);
  p.pos_conv = random_kernel(config.kernel, rng);
  p.pos_deconv = random_kernel(config.kernel, rng);
  p.fuse_conv = LinearParams::random(3 * c, c, rng);
  p.head_conv = LinearParams::random(c, 4, rng);
  return p;
}

void TamParams::validate() const {
  ch_conv1.validate();
  ch_conv2.validate();
  fuse_conv.validate();
  head_conv.validate();
  check_kernel(pos_conv, "position");
  check_kernel(pos_deconv, "deconvolution");
  if (ch_conv1.in_dim != channels || ch_conv2.out_dim != channels ||
      ch_conv1.out_dim != ch_conv2.in_dim) {
    throw InvalidInput("TamParams: channel branch dimensions disagree with C");
  }
  if (fuse_conv.in_dim != 3 * channels || fuse_conv.out_dim != channels) {
    throw InvalidInput("TamParams: fuse_conv must map 3C -> C");
  }
  if (head_conv.in_dim != channels || head_conv.out_dim != 4) {
    throw InvalidInput("TamParams: head_conv must map C -> 4");
  }
}

std::vector<ParamRef> TamParams::refs() {
  std::vector<ParamRef> out;
  add_linear(out, "tam.ch_conv1", ch_conv1);
  add_linear(out, "tam.ch_conv2", ch_conv2);
  out.push_back(ref("tam.pos_conv.kernel", pos_conv.kernel, pos_conv.k, pos_conv.k));
  out.push_back(ref("tam.pos_conv.bias", pos_conv.bias, 1, 1));
  out.push_back(ref("tam.pos_deconv.kernel", pos_deconv.kernel, pos_deconv.k, pos_deconv.k));
  out.push_back(ref("tam.pos_deconv.bias", pos_deconv.bias, 1, 1));
  add_linear(out, "tam.fuse_conv", fuse_conv);
  add_linear(out, "tam.head_conv", head_conv);
  return out;
}

TamVars bind_tam(ad::Tape& tape, const TamParams& p) {
  p.validate();
  auto lin_w = [&](const LinearParams& l) {
    return tape.parameter(l.weight, static_cast<ad::Index>(l.out_dim), static_cast<ad::Index>(l.in_dim));
  };
  auto lin_b = [&](const LinearParams& l) {
    return tape.parameter(l.bias, 1, static_cast<ad::Index>(l.out_dim));
  };
  auto kern = [&](const Conv2dParams& k) {
    return tape.parameter(k.kernel, static_cast<ad::Index>(k.k), static_cast<ad::Index>(k.k));
  };
  TamVars v;
  v.ch1_w = lin_w(p.ch_conv1);
  v.ch1_b = lin_b(p.ch_conv1);
  v.ch2_w = lin_w(p.ch_conv2);
  v.ch2_b = lin_b(p.ch_conv2);
  v.pos_k = kern(p.pos_conv);
  v.pos_b = tape.parameter(p.pos_conv.bias, 1, 1);
  v.deconv_k = kern(p.pos_deconv);
  v.deconv_b = tape.parameter(p.pos_deconv.bias, 1, 1);
  v.fuse_w = lin_w(p.fuse_conv);
  v.fuse_b = lin_b(p.fuse_conv);
  v.head_w = lin_w(p.head_conv);
  v.head_b = lin_b(p.head_conv);
  return v;
}

namespace ad {

Var tam_fuse(Var rv, Var wc, Var wp, Var w, Var b) {
  const Index c = rv.rows();
  const Index hw = rv.cols();
  if (wc.value().size() != c) throw InvalidInput("tam_fuse: channel weights length != C");
  if (wp.value().size() != hw) throw InvalidInput("tam_fuse: position weights length != hw");
  if (w.rows() != c || w.cols() != 3 * c) throw InvalidInput("tam_fuse: weight must be C x 3C");
  if (b.value().size() != c) throw InvalidInput("tam_fuse: bias length != C");
  Tape& t = rv.tape();

  const Eigen::Map<const Eigen::RowVectorXd> wc_row(wc.value().data(), c);
  const Eigen::Map<const Eigen::RowVectorXd> wp_row(wp.value().data(), hw);
  const Matrix& wv = w.value();
  // W [rv*wc; rv*wp; rv] = (A diag(wc) + D) rv + (B rv) * wp
  Matrix mixed = wv.leftCols(c).array().rowwise() * wc_row.array();
  mixed += wv.rightCols(c);
  auto brv = std::make_shared<Matrix>(wv.middleCols(c, c) * rv.value());
  Matrix out = mixed * rv.value();
  out.array() += brv->array().rowwise() * wp_row.array();
  out.colwise() += Eigen::Map<const Eigen::VectorXd>(b.value().data(), c);

  return t.record(std::move(out), {rv, wc, wp, w, b},
                  [&t, rv, wc, wp, w, b, brv, c, hw](const Matrix& g, const Matrix&) {
                    const Eigen::Map<const Eigen::RowVectorXd> wc_row(wc.value().data(), c);
                    const Eigen::Map<const Eigen::RowVectorXd> wp_row(wp.value().data(), hw);
                    const Matrix& wv = w.value();
                    const Matrix& x = rv.value();
                    Matrix g_wp = g.array().rowwise() * wp_row.array();
                    const Matrix s = g * x.transpose();
                    if (t.requires_grad(w)) {
                      Matrix& dw = t.grad_buffer(w);
                      dw.leftCols(c).array() += s.array().rowwise() * wc_row.array();
                      dw.middleCols(c, c).noalias() += g_wp * x.transpose();
                      dw.rightCols(c) += s;
                    }
                    if (t.requires_grad(wc)) {
                      Matrix& d = t.grad_buffer(wc);
                      const Eigen::RowVectorXd col = (wv.leftCols(c).array() * s.array()).colwise().sum();
                      Eigen::Map<Eigen::RowVectorXd>(d.data(), c) += col;
                    }
                    if (t.requires_grad(wp)) {
                      Matrix& d = t.grad_buffer(wp);
                      const Eigen::RowVectorXd col = (g.array() * brv->array()).colwise().sum();
                      Eigen::Map<Eigen::RowVectorXd>(d.data(), hw) += col;
                    }
                    if (t.requires_grad(b)) {
                      Matrix& d = t.grad_buffer(b);
                      Eigen::Map<Eigen::VectorXd>(d.data(), c) += g.rowwise().sum();
                    }
                    if (t.requires_grad(rv)) {
                      Matrix mixed = wv.leftCols(c).array().rowwise() * wc_row.array();
                      mixed += wv.rightCols(c);
                      Matrix& d = t.grad_buffer(rv);
                      d.noalias() += mixed.transpose() * g;
                      d.noalias() += wv.middleCols(c, c).transpose() * g_wp;
                    }
                  });
}

}  // namespace ad

TamGraph tam_forward(ad::Var rv, ad::GridShape grid, const TamVars& v) {
  if (rv.cols() != grid.size()) throw InvalidInput("tam_forward: feature size != grid");
  if (rv.rows() != v.ch1_w.cols()) {
    throw InvalidInput("tam_forward: features have " + std::to_string(rv.rows()) +
                       " channels, parameters expect " + std::to_string(v.ch1_w.cols()));
  }
  TamGraph g;
  ad::Var pooled = ad::reshape(ad::mean_cols(rv), 1, rv.rows());
  ad::Var hidden = ad::relu(ad::affine_rows(pooled, v.ch1_w, v.ch1_b));
  g.channel_weights = ad::sigmoid(ad::affine_rows(hidden, v.ch2_w, v.ch2_b));

  ad::Var avg = ad::mean_rows(rv);
  ad::Var act = ad::relu(ad::conv2d_same(avg, grid, v.pos_k, v.pos_b, false));
  g.position_weights = ad::sigmoid(ad::conv2d_same(act, grid, v.deconv_k, v.deconv_b, true));

  g.f_tam = ad::tam_fuse(rv, g.channel_weights, g.position_weights, v.fuse_w, v.fuse_b);
  ad::Var raw = ad::conv1x1(g.f_tam, v.head_w, v.head_b);
  const ad::Var heads[] = {ad::sigmoid(ad::slice_rows(raw, 0, 2)), ad::tanh(ad::slice_rows(raw, 2, 2))};
  g.predicted = ad::concat_rows(heads);
  return g;
}

namespace {

void check_input(const TensorField& rv, const TamParams& params) {
  if (rv.empty()) throw InvalidInput("tam: empty feature field");
  if (rv.channels() != params.channels) {
    throw InvalidInput("tam: features have " + std::to_string(rv.channels()) +
                       " channels, parameters expect " + std::to_string(params.channels));
  }
}

}  // namespace

std::vector<double> channel_attention(const TensorField& rv, const TamParams& params) {
  check_input(rv, params);
  ad::Tape tape;
  const TamVars v = bind_tam(tape, params);
  const ad::Matrix& w = tam_forward(tape.constant(ad::field_matrix(rv)), ad::grid_of(rv), v)
                            .channel_weights.value();
  return std::vector<double>(w.data(), w.data() + w.size());
}

TensorField position_attention(const TensorField& rv, const TamParams& params) {
  check_input(rv, params);
  ad::Tape tape;
  const TamVars v = bind_tam(tape, params);
  const ad::GridShape grid = ad::grid_of(rv);
  return ad::matrix_field(tam_forward(tape.constant(ad::field_matrix(rv)), grid, v).position_weights.value(),
                          grid);
}

TamOutput tam_forward(const TensorField& rv, const TamParams& params) {
  check_input(rv, params);
  ad::Tape tape;
  const TamVars v = bind_tam(tape, params);
  const ad::GridShape grid = ad::grid_of(rv);
  const TamGraph g = tam_forward(tape.constant(ad::field_matrix(rv)), grid, v);
  return {ad::matrix_field(g.f_tam.value(), grid), ad::matrix_field(g.predicted.value(), grid)};
}

}  // namespace bpdo
