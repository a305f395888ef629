#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <string>

#include "bpdo/error.hpp"
#include "bpdo/pipeline.hpp"

namespace bpdo {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string format(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string format(std::size_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }

void parse(std::string_view s, double& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(out)) {
    throw ConfigError("expected a real number, found '" + std::string(s) + "'");
  }
}
template <class U>
  requires std::is_unsigned_v<U>
void parse(std::string_view s, U& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, found '" + std::string(s) + "'");
  }
}
void parse(std::string_view s, bool& out) {
  if (s == "true") out = true;
  else if (s == "false") out = false;
  else throw ConfigError("expected true or false, found '" + std::string(s) + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view)> set;
};

template <class T>
Field field(const char* key, T PipelineConfig::*outer) {
  return {key, [outer](const PipelineConfig& c) { return format(c.*outer); },
          [outer](PipelineConfig& c, std::string_view v) { parse(v, c.*outer); }};
}

template <class S, class T>
Field field(const char* key, S PipelineConfig::*outer, T S::*inner) {
  return {key, [outer, inner](const PipelineConfig& c) { return format((c.*outer).*inner); },
          [outer, inner](PipelineConfig& c, std::string_view v) { parse(v, (c.*outer).*inner); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      field("c_channels", &PipelineConfig::c_channels),
      field("rows", &PipelineConfig::rows),
      field("cols", &PipelineConfig::cols),
      field("proposal.theta", &PipelineConfig::proposal, &ProposalConfig::theta),
      field("proposal.min_area", &PipelineConfig::proposal, &ProposalConfig::min_area),
      field("proposal.k_points", &PipelineConfig::proposal, &ProposalConfig::k_points),
      field("tam.hidden", &PipelineConfig::tam, &TamConfig::hidden),
      field("tam.kernel", &PipelineConfig::tam, &TamConfig::kernel),
      field("dom.m_heads", &PipelineConfig::dom, &DomConfig::m_heads),
      field("dom.n_samples", &PipelineConfig::dom, &DomConfig::n_samples),
      field("dom.d_v", &PipelineConfig::dom, &DomConfig::d_v),
      field("dom.hidden", &PipelineConfig::dom, &DomConfig::hidden),
      field("dom.r_max", &PipelineConfig::dom, &DomConfig::r_max),
      field("dom.t_iters", &PipelineConfig::dom, &DomConfig::t_iters),
      field("dom.share_iterations", &PipelineConfig::dom, &DomConfig::share_iterations),
      field("loss.alpha", &PipelineConfig::loss, &LossWeights::alpha),
      field("loss.beta", &PipelineConfig::loss, &LossWeights::beta),
      field("loss.gamma", &PipelineConfig::loss, &LossWeights::gamma),
      field("loss.include_background", &PipelineConfig::loss, &LossWeights::include_background),
      field("fit.learning_rate", &PipelineConfig::fit, &FitOptions::learning_rate),
      field("fit.epochs", &PipelineConfig::fit, &FitOptions::epochs),
      field("fit.batch_size", &PipelineConfig::fit, &FitOptions::batch_size),
      field("fit.momentum", &PipelineConfig::fit, &FitOptions::momentum),
      field("fit.grad_clip", &PipelineConfig::fit, &FitOptions::grad_clip),
      field("fit.seed", &PipelineConfig::fit, &FitOptions::seed),
  };
  return f;
}

}  // namespace

TamConfig PipelineConfig::tam_config() const {
  TamConfig t = tam;
  t.channels = c_channels;
  return t;
}

DomConfig PipelineConfig::dom_config() const {
  DomConfig d = dom;
  d.channels = c_channels;
  return d;
}

LossWeights PipelineConfig::loss_weights() const {
  LossWeights w = loss;
  w.eps_epochs = fit.epochs;
  return w;
}

void PipelineConfig::validate() const {
  try {
    if (c_channels == 0 || rows == 0 || cols == 0) throw ConfigError("c_channels, rows and cols must be positive");
    proposal.validate();
    if (tam.kernel == 0 || tam.kernel % 2 == 0) throw ConfigError("tam.kernel must be odd and positive");
    dom_config().validate();
    if (fit.epochs == 0 || fit.batch_size == 0) throw ConfigError("fit.epochs and fit.batch_size must be positive");
    loss_weights().validate();
    if (!(fit.learning_rate > 0.0)) throw ConfigError("fit.learning_rate must be positive");
    if (!(fit.momentum >= 0.0 && fit.momentum < 1.0)) throw ConfigError("fit.momentum must be in [0, 1)");
    if (!(fit.grad_clip >= 0.0)) throw ConfigError("fit.grad_clip must be non-negative");
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

PipelineConfig PipelineConfig::from_text(std::string_view text) {
  PipelineConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* f = nullptr;
    for (const Field& cand : fields()) {
      if (key == cand.key) f = &cand;
    }
    if (!f) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    }
    try {
      f->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + " (" + std::string(key) + "): " + e.what());
    }
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return from_text(text);
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) { return a.to_text() == b.to_text(); }

}  // namespace bpdo
