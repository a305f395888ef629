#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bpdo/autodiff.hpp"

namespace bpdo {

/// Named view of a parameter buffer, shaped rows x cols row-major.
struct ParamRef {
  std::string name;
  std::span<double> values;
  ad::Index rows = 0;
  ad::Index cols = 0;
};

/// Binds a parameter buffer to `tape` (idempotent per buffer).
inline ad::Var bind(ad::Tape& tape, const ParamRef& ref) {
  return tape.parameter(ref.values, ref.rows, ref.cols);
}

struct GradCheckReport {
  std::string op_name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t n_params_checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double rel_tol = 1e-4;
  /// Accept when every analytic/numeric pair agrees to this absolute level.
  double abs_floor = 1e-8;
  double step = 1e-4;
};

/// Builds the scalar to differentiate. Implementations bind every checked
/// ParamRef through `bind()` so the harness can read back its gradient.
using ScalarGraph = std::function<ad::Var(ad::Tape&)>;

/// Compares reverse-mode gradients with central finite differences for every
/// entry of every ParamRef. Relative error uses the denominator
/// max(|analytic|, |numeric|, 1e-8). Buffers are restored before returning.
GradCheckReport grad_check(std::string op_name, const ScalarGraph& graph,
                           std::span<const ParamRef> params, const GradCheckOptions& options = {});

}  // namespace bpdo
