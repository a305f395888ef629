#include "bpdo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bpdo/error.hpp"

namespace bpdo {

namespace {

double evaluate(const ScalarGraph& graph) {
  ad::Tape tape;
  ad::Var out = graph(tape);
  if (out.value().size() != 1) throw InvalidInput("grad_check: graph output is not a scalar");
  return out.item();
}

}  // namespace

GradCheckReport grad_check(std::string op_name, const ScalarGraph& graph,
                           std::span<const ParamRef> params, const GradCheckOptions& options) {
  GradCheckReport report;
  report.op_name = std::move(op_name);

  std::vector<ad::Matrix> analytic;
  {
    ad::Tape tape;
    ad::Var out = graph(tape);
    if (out.value().size() != 1) throw InvalidInput("grad_check: graph output is not a scalar");
    if (!std::isfinite(out.item())) throw InvalidInput("grad_check: graph output is not finite");
    tape.backward(out);
    for (const ParamRef& p : params) {
      ad::Var leaf = tape.find_parameter(p.values.data());
      analytic.push_back(leaf.valid() ? tape.grad(leaf) : ad::Matrix::Zero(p.rows, p.cols));
    }
  }

  const double h = options.step;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const ParamRef& p = params[pi];
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double original = p.values[i];
      p.values[i] = original + h;
      const double up = evaluate(graph);
      p.values[i] = original - h;
      const double down = evaluate(graph);
      p.values[i] = original;

      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[pi].data()[i];
      const double abs_err = std::abs(exact - numeric);
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, abs_err / denom);
      ++report.n_params_checked;
    }
  }
  report.passed = report.max_rel_err <= options.rel_tol || report.max_abs_err <= options.abs_floor;
  return report;
}

}  // namespace bpdo
