#include "oodbench/config.hpp"

#include <filesystem>
#include <initializer_list>
#include <map>
#include <set>

#include "json.hpp"
#include "oodbench/bytes.hpp"
#include "oodbench/errors.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

const json& need(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) fail("missing '" + std::string(key) + "' in " + where);
  return obj.at(key);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) fail(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail("unknown key '" + it.key() + "' in " + where);
  }
}

std::string get_str(const json& v, const std::string& what) {
  if (!v.is_string()) fail(what + " must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& what) {
  if (!v.is_boolean()) fail(what + " must be a boolean");
  return v.get<bool>();
}

double get_num(const json& v, const std::string& what) {
  if (!v.is_number()) fail(what + " must be a number");
  return v.get<double>();
}

std::uint64_t get_seed(const json& v, const std::string& what) {
  if (!v.is_number_unsigned()) fail(what + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::size_t get_size(const json& v, const std::string& what) {
  if (!v.is_number_unsigned()) fail(what + " must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::size_t get_size_pos(const json& v, const std::string& what) {
  const std::size_t n = get_size(v, what);
  if (n == 0) fail(what + " must be positive");
  return n;
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) fail(what + " does not exist: " + path);
}

TrainConfig parse_train(const json& j, const std::string& where) {
  check_keys(j, {"optimizer", "lr", "epochs", "batch_size", "seed"}, where);
  TrainConfig t;
  if (j.contains("optimizer")) {
    const std::string o = get_str(j.at("optimizer"), where + ".optimizer");
    if (o == "sgd")
      t.optimizer = OptimizerKind::SGD;
    else if (o == "adam")
      t.optimizer = OptimizerKind::Adam;
    else if (o == "rmsprop")
      t.optimizer = OptimizerKind::RMSProp;
    else
      fail(where + ".optimizer must be sgd, adam, or rmsprop");
  }
  if (j.contains("lr")) {
    t.lr = get_num(j.at("lr"), where + ".lr");
    if (t.lr <= 0.0) fail(where + ".lr must be positive");
  }
  if (j.contains("epochs")) t.epochs = get_size(j.at("epochs"), where + ".epochs");
  if (j.contains("batch_size"))
    t.batch_size = get_size_pos(j.at("batch_size"), where + ".batch_size");
  t.seed = get_seed(need(j, "seed", where), where + ".seed");
  return t;
}

DatasetConfig parse_dataset(const json& j) {
  check_keys(j,
             {"kind", "num_classes", "per_class", "image_size", "seed", "images",
              "labels", "batches", "split"},
             "dataset");
  DatasetConfig d;
  d.kind = get_str(need(j, "kind", "dataset"), "dataset.kind");
  if (d.kind == "synthetic_shapes") {
    d.num_classes = get_size_pos(need(j, "num_classes", "dataset"), "dataset.num_classes");
    d.per_class = get_size_pos(need(j, "per_class", "dataset"), "dataset.per_class");
    d.image_size = get_size_pos(need(j, "image_size", "dataset"), "dataset.image_size");
    d.seed = get_seed(need(j, "seed", "dataset"), "dataset.seed");
  } else if (d.kind == "idx") {
    d.images_path = get_str(need(j, "images", "dataset"), "dataset.images");
    d.labels_path = get_str(need(j, "labels", "dataset"), "dataset.labels");
    require_file(d.images_path, "dataset.images");
    require_file(d.labels_path, "dataset.labels");
  } else if (d.kind == "cifar10") {
    const json& b = need(j, "batches", "dataset");
    if (!b.is_array() || b.empty()) fail("dataset.batches must be a non-empty array");
    for (const json& e : b) {
      d.batches.push_back(get_str(e, "dataset.batches entry"));
      require_file(d.batches.back(), "dataset batch");
    }
  } else {
    fail("dataset.kind must be synthetic_shapes, idx, or cifar10");
  }
  const json& sp = need(j, "split", "dataset");
  check_keys(sp, {"train_fraction", "seed"}, "dataset.split");
  d.train_fraction = get_num(need(sp, "train_fraction", "dataset.split"),
                             "dataset.split.train_fraction");
  if (d.train_fraction <= 0.0 || d.train_fraction >= 1.0)
    fail("dataset.split.train_fraction must lie strictly between 0 and 1");
  d.split_seed = get_seed(need(sp, "seed", "dataset.split"), "dataset.split.seed");
  return d;
}

ClassifierConfig parse_classifier(const json& j) {
  check_keys(j, {"layers", "capture", "train"}, "classifier");
  ClassifierConfig c;
  const json& layers = need(j, "layers", "classifier");
  if (!layers.is_array() || layers.empty())
    fail("classifier.layers must be a non-empty array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& lj = layers[i];
    const std::string where = "classifier.layers[" + std::to_string(i) + "]";
    LayerConfig lc;
    lc.type = get_str(need(lj, "type", where), where + ".type");
    if (lc.type == "dense") {
      check_keys(lj, {"type", "out"}, where);
      lc.out = get_size_pos(need(lj, "out", where), where + ".out");
    } else if (lc.type == "conv") {
      check_keys(lj, {"type", "out_ch", "kernel", "stride"}, where);
      lc.out_ch = get_size_pos(need(lj, "out_ch", where), where + ".out_ch");
      lc.kernel = get_size_pos(need(lj, "kernel", where), where + ".kernel");
      if (lj.contains("stride"))
        lc.stride = get_size_pos(lj.at("stride"), where + ".stride");
    } else if (lc.type == "relu") {
      check_keys(lj, {"type"}, where);
    } else {
      fail(where + ".type must be dense, conv, or relu");
    }
    c.layers.push_back(lc);
  }
  const json& cap = need(j, "capture", "classifier");
  if (!cap.is_array()) fail("classifier.capture must be an array");
  for (const json& e : cap) {
    const std::size_t idx = get_size(e, "classifier.capture entry");
    if (idx >= c.layers.size()) fail("classifier.capture index out of range");
    c.capture.push_back(idx);
  }
  c.train = parse_train(need(j, "train", "classifier"), "classifier.train");
  return c;
}

MonitorSettings parse_monitors(const json& j) {
  check_keys(j, {"oob", "odin", "recon"}, "monitors");
  MonitorSettings m;
  if (j.contains("oob")) {
    const json& o = j.at("oob");
    check_keys(o,
               {"gamma", "clusters", "use_elbow", "elbow_max", "reducer",
                "isomap_neighbors", "seed"},
               "monitors.oob");
    m.oob_enabled = true;
    if (o.contains("gamma")) {
      m.oob.gamma = get_num(o.at("gamma"), "monitors.oob.gamma");
      if (m.oob.gamma < 0.0) fail("monitors.oob.gamma must be >= 0");
    }
    if (o.contains("clusters"))
      m.oob.clusters = get_size(o.at("clusters"), "monitors.oob.clusters");
    if (o.contains("use_elbow"))
      m.oob.use_elbow = get_bool(o.at("use_elbow"), "monitors.oob.use_elbow");
    if (o.contains("elbow_max"))
      m.oob.elbow_max = get_size_pos(o.at("elbow_max"), "monitors.oob.elbow_max");
    if (o.contains("reducer")) {
      const std::string r = get_str(o.at("reducer"), "monitors.oob.reducer");
      if (r == "simple")
        m.oob.reducer = ReducerKind::Simple;
      else if (r == "pca")
        m.oob.reducer = ReducerKind::Pca;
      else if (r == "isomap")
        m.oob.reducer = ReducerKind::Isomap;
      else
        fail("monitors.oob.reducer must be simple, pca, or isomap");
    }
    if (o.contains("isomap_neighbors"))
      m.oob.isomap_neighbors =
          get_size_pos(o.at("isomap_neighbors"), "monitors.oob.isomap_neighbors");
    m.oob.seed = get_seed(need(o, "seed", "monitors.oob"), "monitors.oob.seed");
  }
  if (j.contains("odin")) {
    const json& o = j.at("odin");
    check_keys(o, {"temperature", "epsilon"}, "monitors.odin");
    m.odin_enabled = true;
    if (o.contains("temperature")) {
      m.odin.temperature = get_num(o.at("temperature"), "monitors.odin.temperature");
      if (m.odin.temperature <= 0.0) fail("monitors.odin.temperature must be positive");
    }
    if (o.contains("epsilon")) {
      m.odin.epsilon = get_num(o.at("epsilon"), "monitors.odin.epsilon");
      if (m.odin.epsilon < 0.0) fail("monitors.odin.epsilon must be >= 0");
    }
  }
  if (j.contains("recon")) {
    const json& o = j.at("recon");
    check_keys(o, {"hidden", "train"}, "monitors.recon");
    m.recon_enabled = true;
    if (o.contains("hidden")) {
      const json& h = o.at("hidden");
      if (!h.is_array() || h.empty()) fail("monitors.recon.hidden must be a non-empty array");
      m.recon.hidden.clear();
      for (const json& e : h)
        m.recon.hidden.push_back(get_size_pos(e, "monitors.recon.hidden entry"));
    }
    m.recon.train = parse_train(need(o, "train", "monitors.recon"), "monitors.recon.train");
    if (m.recon.train.optimizer == OptimizerKind::SGD)
      fail("monitors.recon.train.optimizer must be adam or rmsprop");
  }
  return m;
}

// Parameter keys each fault accepts besides name/severity/seed.
const std::set<std::string>& fault_param_keys(const std::string& name) {
  static const std::map<std::string, std::set<std::string>> table = {
      {"rotate", {"angle_deg"}},
      {"brightness", {"delta"}},
      {"contrast", {"factor"}},
      {"fgsm", {"epsilon"}},
      {"novelty", {"classes", "per_class", "label_offset"}},
  };
  static const std::set<std::string> none;
  const auto it = table.find(name);
  return it == table.end() ? none : it->second;
}

bool fault_needs_severity(const std::string& name) {
  return name == "gaussian_noise" || name == "gaussian_blur" || name == "zoom_blur" ||
         name == "glass_blur" || name == "snow" || name == "fog" ||
         name == "pixel_trap" || name == "row_add_logic" || name == "shifted_pixel";
}

std::vector<FaultTemplate> parse_faults(const json& j) {
  if (!j.is_array()) fail("faults must be an array");
  std::vector<FaultTemplate> out;
  std::set<std::string> tags;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& fj = j[i];
    const std::string where = "faults[" + std::to_string(i) + "]";
    FaultTemplate t;
    t.name = get_str(need(fj, "name", where), where + ".name");
    try {
      fault_category(t.name);
    } catch (const ParameterError& e) {
      fail(where + ": " + e.what());
    }
    const std::set<std::string>& params = fault_param_keys(t.name);
    for (auto it = fj.begin(); it != fj.end(); ++it) {
      const std::string& key = it.key();
      if (key == "name" || key == "seed") continue;
      if (key == "severity") {
        if (!fault_needs_severity(t.name)) fail(where + ": '" + t.name + "' takes no severity");
        const std::size_t s = get_size_pos(it.value(), where + ".severity");
        if (s > 5) fail(where + ".severity must lie in 1..5");
        t.severity = static_cast<int>(s);
        continue;
      }
      if (!params.count(key)) fail("unknown key '" + key + "' in " + where);
      t.params[key] = get_num(it.value(), where + "." + key);
    }
    if (fault_needs_severity(t.name) && t.severity == 0)
      fail(where + ": '" + t.name + "' needs a severity in 1..5");
    t.seed = get_seed(need(fj, "seed", where), where + ".seed");
    const std::string tag = fault_tag(t);
    if (tag == "control" || tag == "train" || tag == "holdout")
      fail(where + ": tag '" + tag + "' is reserved");
    if (!tags.insert(tag).second) fail(where + ": duplicate fault tag '" + tag + "'");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<std::string> MonitorSettings::enabled() const {
  std::vector<std::string> v;
  if (oob_enabled) v.push_back("oob");
  if (odin_enabled) v.push_back("odin");
  if (recon_enabled) v.push_back("recon");
  return v;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("config parse error: ") + e.what());
  }
  check_keys(j,
             {"name", "out_dir", "stream_seed", "control", "dataset", "classifier",
              "monitors", "faults"},
             "config");
  ExperimentConfig cfg;
  if (j.contains("name")) cfg.name = get_str(j.at("name"), "name");
  cfg.out_dir = get_str(need(j, "out_dir", "config"), "out_dir");
  cfg.stream_seed = get_seed(need(j, "stream_seed", "config"), "stream_seed");
  if (j.contains("control")) cfg.control = get_bool(j.at("control"), "control");
  cfg.dataset = parse_dataset(need(j, "dataset", "config"));
  cfg.classifier = parse_classifier(need(j, "classifier", "config"));
  if (j.contains("monitors")) cfg.monitors = parse_monitors(j.at("monitors"));
  if (j.contains("faults")) cfg.faults = parse_faults(j.at("faults"));
  cfg.config_hash = fnv1a64(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error& e) {
    fail(std::string("cannot read config: ") + e.what());
  }
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

void apply_seed_override(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.stream_seed = seed;
  cfg.dataset.seed = mix_seed(seed, 1);
  cfg.dataset.split_seed = mix_seed(seed, 2);
  cfg.classifier.train.seed = mix_seed(seed, 3);
  cfg.monitors.oob.seed = mix_seed(seed, 4);
  cfg.monitors.recon.train.seed = mix_seed(seed, 5);
  for (std::size_t i = 0; i < cfg.faults.size(); ++i)
    cfg.faults[i].seed = mix_seed(seed, 100 + i);
}

std::vector<LayerSpec> resolve_layers(const std::vector<LayerConfig>& layers,
                                      const std::vector<std::size_t>& input_shape) {
  std::vector<LayerSpec> specs;
  std::vector<std::size_t> shape = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerConfig& lc = layers[i];
    const std::string where = "classifier.layers[" + std::to_string(i) + "]";
    if (lc.type == "dense") {
      specs.push_back(LayerSpec::dense(Tensor::numel_of(shape), lc.out));
      shape = {lc.out};
    } else if (lc.type == "conv") {
      if (shape.size() != 3) fail(where + ": conv needs a {C,H,W} input");
      if (shape[1] < lc.kernel || shape[2] < lc.kernel)
        fail(where + ": kernel larger than its input");
      specs.push_back(LayerSpec::conv(shape[0], lc.out_ch, lc.kernel, lc.kernel, lc.stride));
      shape = {lc.out_ch, (shape[1] - lc.kernel) / lc.stride + 1,
               (shape[2] - lc.kernel) / lc.stride + 1};
    } else if (lc.type == "relu") {
      specs.push_back(LayerSpec::relu());
    } else {
      fail(where + ": unknown layer type '" + lc.type + "'");
    }
  }
  if (specs.empty() || specs.back().kind != LayerKind::Dense)
    fail("classifier.layers must end in a dense layer");
  return specs;
}

}  // namespace oodbench
