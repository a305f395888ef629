#include <algorithm>
#include <cstring>
#include <map>

#include "bpdo/error.hpp"
#include "bpdo/pipeline.hpp"
#include "bpdo/random.hpp"

namespace bpdo {

Model Model::init(const PipelineConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  Rng rng(mix_seed(config.fit.seed, 0x7a11));
  m.tam = TamParams::init(config.tam_config(), rng);
  m.dom = init_dom_stages(config.dom_config(), rng);
  round_to_f32(m);
  return m;
}

std::vector<ParamRef> Model::refs() {
  std::vector<ParamRef> out = tam.refs();
  for (std::size_t i = 0; i < dom.size(); ++i) {
    auto r = dom[i].refs(dom.size() == 1 ? "dom" : "dom." + std::to_string(i));
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

void Model::validate() const {
  tam.validate();
  if (tam.channels != config.c_channels) throw ConfigError("model: TAM channels differ from config");
  const std::size_t stages = config.dom.share_iterations ? 1 : config.dom.t_iters;
  if (dom.size() != stages) throw ConfigError("model: wrong number of DOM stages");
  for (const auto& d : dom) {
    d.validate();
    if (d.channels != config.c_channels) throw ConfigError("model: DOM channels differ from config");
  }
}

void round_to_f32(Model& model) {
  for (auto& r : model.refs()) {
    for (double& v : r.values) v = static_cast<double>(static_cast<float>(v));
  }
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = {{"l_cls", r.l_cls}, {"l_dis", r.l_dis}, {"l_dir", r.l_dir}, {"l_pm", r.l_pm},
       {"schedule_factor", r.schedule_factor}, {"total", r.total}, {"epoch", r.epoch}};
}

namespace {

constexpr char kCkptMagic[4] = {'B', 'P', 'D', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_blob(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> b) {
  put_u32(out, static_cast<std::uint32_t>(b.size()));
  out.insert(out.end(), b.begin(), b.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = static_cast<std::uint32_t>(b_[pos_]) | static_cast<std::uint32_t>(b_[pos_ + 1]) << 8 |
                            static_cast<std::uint32_t>(b_[pos_ + 2]) << 16 |
                            static_cast<std::uint32_t>(b_[pos_ + 3]) << 24;
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> blob() {
    const std::uint32_t n = u32();
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::span<const std::uint8_t> bytes_of(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

LossReport loss_from_json(const nlohmann::json& j) {
  LossReport r;
  r.l_cls = j.at("l_cls").get<double>();
  r.l_dis = j.at("l_dis").get<double>();
  r.l_dir = j.at("l_dir").get<double>();
  r.l_pm = j.at("l_pm").get<double>();
  r.schedule_factor = j.at("schedule_factor").get<double>();
  r.total = j.at("total").get<double>();
  r.epoch = j.at("epoch").get<std::size_t>();
  return r;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Checkpoint c = ckpt;
  c.model.validate();
  std::vector<std::uint8_t> out(kCkptMagic, kCkptMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_blob(out, bytes_of(c.model.config.to_text()));
  const nlohmann::json meta = {{"epoch", c.metadata.epoch}, {"final_loss", c.metadata.final_loss}};
  put_blob(out, bytes_of(meta.dump()));
  const auto refs = c.model.refs();
  put_u32(out, static_cast<std::uint32_t>(refs.size()));
  for (const auto& r : refs) {
    TensorField f(1, static_cast<std::size_t>(r.rows), static_cast<std::size_t>(r.cols),
                  std::vector<double>(r.values.begin(), r.values.end()));
    put_blob(out, encode_container(f, r.name));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  Reader rd(bytes.subspan(4));
  const std::uint32_t version = rd.u32();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto cfg_bytes = rd.blob();
  const PipelineConfig config =
      PipelineConfig::from_text(std::string_view(reinterpret_cast<const char*>(cfg_bytes.data()), cfg_bytes.size()));
  const auto meta_bytes = rd.blob();
  Checkpoint c;
  try {
    const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    c.metadata.epoch = meta.at("epoch").get<std::size_t>();
    c.metadata.final_loss = loss_from_json(meta.at("final_loss"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed metadata: ") + e.what());
  }
  c.model = Model::init(config);
  auto refs = c.model.refs();
  const std::uint32_t n = rd.u32();
  if (n != refs.size()) {
    throw FormatError("checkpoint: holds " + std::to_string(n) + " tensors, config implies " +
                      std::to_string(refs.size()));
  }
  for (auto& r : refs) {
    const NamedField nf = decode_container(rd.blob());
    if (nf.name != r.name) throw FormatError("checkpoint: expected tensor '" + r.name + "', found '" + nf.name + "'");
    if (nf.field.size() != r.values.size() || nf.field.rows() != static_cast<std::size_t>(r.rows)) {
      throw FormatError("checkpoint: tensor '" + r.name + "' has the wrong shape");
    }
    std::copy(nf.field.data().begin(), nf.field.data().end(), r.values.begin());
  }
  if (!rd.done()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_binary_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Corpus

namespace {

nlohmann::json ring_json(std::span<const Point2> pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const Point2& p : pts) a.push_back({p.x, p.y});
  return a;
}

std::vector<Point2> ring_from_json(const nlohmann::json& j) {
  std::vector<Point2> pts;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw FormatError("expected [x, y] pairs");
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return pts;
}

}  // namespace

std::vector<GtScene> gt_scenes(std::span<const SceneRecord> scenes) {
  std::vector<GtScene> out;
  for (const auto& s : scenes) {
    GtScene g{s.id, s.polygons, s.dont_care};
    g.dont_care.resize(g.polygons.size(), false);
    out.push_back(std::move(g));
  }
  return out;
}

nlohmann::json gt_json(std::span<const SceneRecord> scenes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : scenes) {
    nlohmann::json polys = nlohmann::json::array();
    nlohmann::json dc = nlohmann::json::array();
    for (std::size_t i = 0; i < s.polygons.size(); ++i) {
      polys.push_back(ring_json(s.polygons[i].vertices()));
      dc.push_back(i < s.dont_care.size() && s.dont_care[i]);
    }
    arr.push_back({{"scene_id", s.id}, {"rows", s.rows}, {"cols", s.cols}, {"polygons", polys}, {"dont_care", dc}});
  }
  return {{"scenes", arr}};
}

std::vector<SceneRecord> parse_gt_json(const nlohmann::json& j) {
  std::vector<SceneRecord> out;
  try {
    for (const auto& s : j.at("scenes")) {
      SceneRecord r;
      r.id = s.at("scene_id").get<std::string>();
      r.rows = s.at("rows").get<std::size_t>();
      r.cols = s.at("cols").get<std::size_t>();
      for (const auto& p : s.at("polygons")) r.polygons.emplace_back(ring_from_json(p));
      if (s.contains("dont_care")) {
        for (const auto& d : s.at("dont_care")) r.dont_care.push_back(d.get<bool>());
      }
      r.dont_care.resize(r.polygons.size(), false);
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ground truth: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("ground truth: ") + e.what());
  }
  return out;
}

void write_corpus(const std::filesystem::path& dir, std::span<const SceneRecord> scenes) {
  std::filesystem::create_directories(dir / "scenes");
  for (const auto& s : scenes) {
    if (!s.features) throw InvalidInput("write_corpus: scene '" + s.id + "' has no features");
    write_container(dir / "scenes" / (s.id + ".bpdt"), *s.features, "features");
  }
  const std::string text = gt_json(scenes).dump(1) + "\n";
  write_binary_file(dir / "gt.json", bytes_of(text));
}

std::vector<SceneRecord> read_corpus(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(dir / "gt.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "gt.json").string() + ": " + e.what());
  }
  auto scenes = parse_gt_json(j);
  for (auto& s : scenes) {
    NamedField nf = read_container(dir / "scenes" / (s.id + ".bpdt"));
    if (nf.field.rows() != s.rows || nf.field.cols() != s.cols) {
      throw FormatError("scene '" + s.id + "': feature size differs from gt.json");
    }
    s.features = std::move(nf.field);
  }
  return scenes;
}

std::vector<SceneRecord> synth_corpus(std::uint64_t seed, std::size_t count, const PipelineConfig& config,
                                      std::size_t max_instances) {
  std::vector<SceneRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, i);
    const std::size_t n = max_instances ? 1 + static_cast<std::size_t>(s % max_instances) : 0;
    SceneRecord r = synth_scene(s, config.rows, config.cols, n, config.c_channels);
    char id[32];
    std::snprintf(id, sizeof id, "scene_%04zu", i);
    r.id = id;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bpdo
