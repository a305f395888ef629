#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpdo/data_io.hpp"
#include "bpdo/dom.hpp"
#include "bpdo/eval.hpp"
#include "bpdo/gradcheck.hpp"
#include "bpdo/loss.hpp"
#include "bpdo/priors.hpp"
#include "bpdo/proposal.hpp"
#include "bpdo/tam.hpp"

namespace bpdo {

struct FitOptions {
  double learning_rate = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  double momentum = 0.9;
  /// Global gradient-norm clip per batch; 0 disables.
  double grad_clip = 0.0;
  std::uint64_t seed = 0;
};

struct PipelineConfig {
  std::size_t c_channels = 32;
  std::size_t rows = 128;
  std::size_t cols = 128;
  ProposalConfig proposal;
  TamConfig tam;   // channels follows c_channels
  DomConfig dom;   // channels follows c_channels
  LossWeights loss;  // eps_epochs follows fit.epochs
  FitOptions fit;

  /// Copies shared sizes into the sub-configs and checks every field.
  /// Throws ConfigError.
  void validate() const;
  TamConfig tam_config() const;
  DomConfig dom_config() const;
  LossWeights loss_weights() const;

  /// `key = value` lines, `#` comments. Keys are listed by to_text().
  std::string to_text() const;
  static PipelineConfig from_text(std::string_view text);
  static PipelineConfig load(const std::filesystem::path& path);

  friend bool operator==(const PipelineConfig&, const PipelineConfig&);
};

struct Model {
  PipelineConfig config;
  TamParams tam;
  std::vector<DomParams> dom;  // one shared stage or t_iters stages

  static Model init(const PipelineConfig& config);
  /// Every learnable buffer, TAM first, in a fixed order.
  std::vector<ParamRef> refs();
  void validate() const;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Rounds every parameter to the nearest f32 so checkpoints are exact.
void round_to_f32(Model& model);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct FitMetadata {
  std::size_t epoch = 0;  // epochs completed
  LossReport final_loss;
};

struct Checkpoint {
  Model model;
  FitMetadata metadata;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on malformed data and ConfigError on version mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Corpus layout: <dir>/gt.json and <dir>/scenes/<id>.bpdt (features).

std::vector<GtScene> gt_scenes(std::span<const SceneRecord> scenes);
nlohmann::json gt_json(std::span<const SceneRecord> scenes);
/// Reads gt.json (polygons, dont_care, rows, cols) without features.
std::vector<SceneRecord> parse_gt_json(const nlohmann::json& j);
void write_corpus(const std::filesystem::path& dir, std::span<const SceneRecord> scenes);
std::vector<SceneRecord> read_corpus(const std::filesystem::path& dir);

/// Generates `count` scenes at config size; scene i uses seed mix_seed(seed, i)
/// and 1..max_instances instances.
std::vector<SceneRecord> synth_corpus(std::uint64_t seed, std::size_t count, const PipelineConfig& config,
                                      std::size_t max_instances = 3);

struct EpochLog {
  LossReport report;  // component means over the epoch's scenes
};

struct FitResult {
  Checkpoint checkpoint;
  std::vector<LossReport> curve;  // one row per epoch
};

struct FitHooks {
  std::function<void(const LossReport&)> on_epoch;
};

/// Trains TAM and DOM end to end on the scheduled total loss with momentum SGD.
/// Scenes need features. Deterministic for a given config and corpus;
/// BPDO_THREADS only changes how per-scene gradients are computed.
FitResult fit(const PipelineConfig& config, std::span<const SceneRecord> scenes, const FitHooks& hooks = {});

std::string loss_curve_csv(std::span<const LossReport> curve);

/// Loss of one scene at the given epoch (for diagnostics and tests).
LossReport scene_loss(const Model& model, const SceneRecord& scene, std::size_t epoch);

struct Detection {
  std::string scene_id;
  std::vector<Polygon> polygons;                     // final rings that form valid polygons
  std::vector<std::vector<BoundaryPoints>> iterations;  // [iteration][proposal], t_iters + 1 entries
  TensorField predicted;                             // 4-channel prior-map prediction
};

/// Throws ConfigError when the scene's feature channels differ from the model.
Detection detect(const Model& model, const SceneRecord& scene);

nlohmann::json predictions_json(std::span<const Detection> detections);
std::vector<PredScene> parse_predictions_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const LossReport& r);

/// Named gradient-check suites on small fixed-seed problems: "tam", "dom",
/// "loss" or "all".
std::vector<GradCheckReport> run_gradcheck_suite(const std::string& suite, std::uint64_t seed = 0);

/// Worker count from BPDO_THREADS (default 1, minimum 1).
std::size_t thread_count();

}  // namespace bpdo
