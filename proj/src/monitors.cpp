#include "oodbench/monitors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "oodbench/checkpoint.hpp"
#include "oodbench/clustering.hpp"
#include "oodbench/errors.hpp"
#include "oodbench/log.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

std::vector<std::uint8_t> get_blob(ByteReader& r) {
  const std::uint32_t n = r.get_u32();
  r.need(n);
  std::vector<std::uint8_t> out(r.data + r.pos, r.data + r.pos + n);
  r.pos += n;
  return out;
}

void put_blob(ByteWriter& w, const std::vector<std::uint8_t>& blob) {
  w.put_u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes.insert(w.bytes.end(), blob.begin(), blob.end());
}

}  // namespace

// ---------- activation boxes ----------

OobMonitor::OobMonitor(std::size_t capture_index, Reducer reducer,
                       std::vector<std::vector<Box2>> class_boxes, double gamma)
    : capture_index_(capture_index),
      reducer_(std::move(reducer)),
      class_boxes_(std::move(class_boxes)),
      gamma_(gamma) {
  if (gamma_ < 0.0) throw ParameterError("box inflation must be >= 0");
}

bool OobMonitor::outside_boxes(std::size_t cls, const std::array<double, 2>& p) const {
  if (cls >= class_boxes_.size()) return true;
  for (const Box2& b : class_boxes_[cls]) {
    bool inside = true;
    for (std::size_t d = 0; d < 2; ++d) {
      // Inflate by gamma around the center; at gamma = 0 the bounds are
      // the stored ones, bit for bit.
      const double half_extra = (b.hi[d] - b.lo[d]) / 2.0 * gamma_;
      double lo = b.lo[d] - half_extra;
      double hi = b.hi[d] + half_extra;
      if (lo == hi) {
        lo -= 1e-9;
        hi += 1e-9;
      }
      if (p[d] < lo || p[d] > hi) {
        inside = false;
        break;
      }
    }
    if (inside) return false;
  }
  return true;
}

bool OobMonitor::detect(const Network&, const Tensor&, const ForwardTrace& trace) const {
  const auto it = trace.captured.find(capture_index_);
  if (it == trace.captured.end())
    throw IntegrityError("forward trace lacks the monitored activations");
  const std::array<double, 2> p = project(reducer_, it->second);
  return outside_boxes(static_cast<std::size_t>(trace.prediction), p);
}

OobMonitor OobMonitor::with_gamma(double gamma) const {
  return OobMonitor(capture_index_, reducer_, class_boxes_, gamma);
}

void OobMonitor::serialize_payload(ByteWriter& w) const {
  w.put_u32(static_cast<std::uint32_t>(capture_index_));
  w.put_f64(gamma_);
  serialize_reducer(w, reducer_);
  w.put_u32(static_cast<std::uint32_t>(class_boxes_.size()));
  for (const auto& boxes : class_boxes_) {
    w.put_u32(static_cast<std::uint32_t>(boxes.size()));
    for (const Box2& b : boxes) {
      w.put_f64(b.lo[0]);
      w.put_f64(b.lo[1]);
      w.put_f64(b.hi[0]);
      w.put_f64(b.hi[1]);
    }
  }
}

std::unique_ptr<OobMonitor> OobMonitor::deserialize_payload(ByteReader& r) {
  const std::size_t capture_index = r.get_u32();
  const double gamma = r.get_f64();
  Reducer red = deserialize_reducer(r);
  const std::uint32_t n_classes = r.get_u32();
  std::vector<std::vector<Box2>> classes(n_classes);
  for (auto& boxes : classes) {
    const std::uint32_t n = r.get_u32();
    boxes.resize(n);
    for (Box2& b : boxes) {
      b.lo[0] = r.get_f64();
      b.lo[1] = r.get_f64();
      b.hi[0] = r.get_f64();
      b.hi[1] = r.get_f64();
    }
  }
  return std::make_unique<OobMonitor>(capture_index, std::move(red), std::move(classes),
                                      gamma);
}

OobMonitor fit_oob(const Network& net, const std::vector<Example>& train,
                   const OobConfig& cfg) {
  if (net.capture_points.empty())
    throw ParameterError("activation monitoring needs a capture point on the network");
  const std::size_t cap = net.capture_points.back();
  const std::size_t n_classes = net.num_classes();

  // Activations of correctly classified training inputs, grouped by label.
  std::vector<std::vector<std::vector<double>>> acts(n_classes);
  std::vector<Point> pooled;
  for (const Example& ex : train) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= n_classes)
      throw DataError("training label out of range for the network head");
    const ForwardTrace t = forward(net, ex.image);
    if (t.prediction != ex.label) continue;
    const std::vector<double>& a = t.captured.at(cap);
    acts[static_cast<std::size_t>(ex.label)].push_back(a);
    pooled.push_back(a);
  }
  if (pooled.empty())
    throw DataError("no correctly classified training inputs to build boxes from");

  Reducer reducer;
  switch (cfg.reducer) {
    case ReducerKind::Simple:
      reducer = fit_simple(pooled.front().size());
      break;
    case ReducerKind::Pca:
      reducer = fit_pca2(pooled);
      break;
    case ReducerKind::Isomap:
      reducer = fit_isomap2(pooled, cfg.isomap_neighbors);
      break;
  }

  std::vector<std::vector<Box2>> class_boxes(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (acts[c].empty()) {
      log::warn("no correctly classified inputs for class " + std::to_string(c) +
                "; its predictions will always flag");
      continue;
    }
    std::vector<Point> pts;
    pts.reserve(acts[c].size());
    for (const auto& a : acts[c]) {
      const std::array<double, 2> p = project(reducer, a);
      pts.push_back({p[0], p[1]});
    }
    std::size_t k = cfg.clusters == 0 ? 1 : cfg.clusters;
    if (cfg.use_elbow)
      k = elbow_k(pts, 1, std::min(cfg.elbow_max, pts.size()),
                  mix_seed(cfg.seed, 1000 + c))
              .k;
    k = std::min(k, pts.size());
    const KmeansResult km = kmeans(pts, k, mix_seed(cfg.seed, c));

    std::vector<Box2> boxes(k);
    std::vector<bool> seen(k, false);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::size_t a = km.assign[i];
      Box2& b = boxes[a];
      if (!seen[a]) {
        b.lo = {pts[i][0], pts[i][1]};
        b.hi = b.lo;
        seen[a] = true;
      } else {
        for (std::size_t d = 0; d < 2; ++d) {
          b.lo[d] = std::min(b.lo[d], pts[i][d]);
          b.hi[d] = std::max(b.hi[d], pts[i][d]);
        }
      }
    }
    class_boxes[c] = std::move(boxes);
  }
  return OobMonitor(cap, std::move(reducer), std::move(class_boxes), cfg.gamma);
}

// ---------- confidence with input preprocessing ----------

double preprocessed_confidence(const Network& net, const Tensor& x,
                               double temperature, double epsilon) {
  if (temperature <= 0.0) throw ParameterError("temperature must be positive");
  if (epsilon < 0.0) throw ParameterError("input nudge must be >= 0");
  const ForwardTrace t0 = forward(net, x);
  const Tensor g = input_gradient(net, x, t0.prediction, temperature);
  Tensor nudged = x;
  for (std::size_t i = 0; i < nudged.data.size(); ++i) {
    const double s = g.data[i] > 0.0 ? 1.0 : (g.data[i] < 0.0 ? -1.0 : 0.0);
    nudged.data[i] = std::clamp(x.data[i] - epsilon * s, 0.0, 1.0);
  }
  const ForwardTrace t1 = forward(net, nudged);
  const std::vector<double> probs = softmax_temperature(t1.logits, temperature);
  return *std::max_element(probs.begin(), probs.end());
}

OdinMonitor::OdinMonitor(double temperature, double epsilon, double delta)
    : temperature_(temperature), epsilon_(epsilon), delta_(delta) {
  if (temperature_ <= 0.0) throw ParameterError("temperature must be positive");
  if (epsilon_ < 0.0) throw ParameterError("input nudge must be >= 0");
}

bool OdinMonitor::detect(const Network& net, const Tensor& x, const ForwardTrace&) const {
  return preprocessed_confidence(net, x, temperature_, epsilon_) < delta_;
}

void OdinMonitor::serialize_payload(ByteWriter& w) const {
  w.put_f64(temperature_);
  w.put_f64(epsilon_);
  w.put_f64(delta_);
}

std::unique_ptr<OdinMonitor> OdinMonitor::deserialize_payload(ByteReader& r) {
  const double t = r.get_f64();
  const double e = r.get_f64();
  const double d = r.get_f64();
  return std::make_unique<OdinMonitor>(t, e, d);
}

OdinMonitor fit_odin(const Network& net, const std::vector<Example>& calibration,
                     double temperature, double epsilon) {
  if (calibration.empty()) throw DataError("confidence calibration set is empty");
  double delta = std::numeric_limits<double>::infinity();
  for (const Example& ex : calibration)
    delta = std::min(delta, preprocessed_confidence(net, ex.image, temperature, epsilon));
  return OdinMonitor(temperature, epsilon, delta);
}

// ---------- reconstruction distance ----------

ReconMonitor::ReconMonitor(std::vector<Autoencoder> models) {
  for (Autoencoder& ae : models) {
    const int cls = ae.class_id;
    if (models_.count(cls)) throw ParameterError("duplicate reconstruction model for class " +
                                                 std::to_string(cls));
    thresholds_[cls] = ae.train_loss_mean;
    models_.emplace(cls, std::move(ae));
  }
}

const Autoencoder* ReconMonitor::model_for(int cls) const {
  const auto it = models_.find(cls);
  return it == models_.end() ? nullptr : &it->second;
}

double ReconMonitor::threshold_for(int cls) const {
  const auto it = thresholds_.find(cls);
  if (it == thresholds_.end())
    throw ParameterError("no reconstruction model for class " + std::to_string(cls));
  return it->second;
}

void ReconMonitor::set_threshold(int cls, double t) {
  if (!models_.count(cls))
    throw ParameterError("no reconstruction model for class " + std::to_string(cls));
  thresholds_[cls] = t;
}

bool ReconMonitor::detect(const Network&, const Tensor& x, const ForwardTrace& trace) const {
  const Autoencoder* ae = model_for(trace.prediction);
  if (ae == nullptr) return true;
  return reconstruction_loss(*ae, x) > thresholds_.at(trace.prediction);
}

void ReconMonitor::serialize_payload(ByteWriter& w) const {
  w.put_u32(static_cast<std::uint32_t>(models_.size()));
  for (const auto& [cls, ae] : models_) {
    w.put_u32(static_cast<std::uint32_t>(cls));
    w.put_f64(thresholds_.at(cls));
    w.put_f64(ae.train_loss_mean);
    put_blob(w, serialize_network(ae.net, 0));
  }
}

std::unique_ptr<ReconMonitor> ReconMonitor::deserialize_payload(ByteReader& r) {
  const std::uint32_t n = r.get_u32();
  std::vector<Autoencoder> models;
  std::vector<std::pair<int, double>> thresholds;
  models.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Autoencoder ae;
    ae.class_id = static_cast<int>(r.get_u32());
    const double threshold = r.get_f64();
    ae.train_loss_mean = r.get_f64();
    ae.net = deserialize_network(get_blob(r));
    thresholds.push_back({ae.class_id, threshold});
    models.push_back(std::move(ae));
  }
  auto mon = std::make_unique<ReconMonitor>(std::move(models));
  for (const auto& [cls, t] : thresholds) mon->set_threshold(cls, t);
  return mon;
}

ReconMonitor fit_recon(const std::vector<Example>& train, const ReconConfig& cfg) {
  if (train.empty()) throw DataError("reconstruction training set is empty");
  std::map<int, std::vector<Example>> by_class;
  for (const Example& ex : train) {
    if (ex.label < 0) throw DataError("negative class label");
    by_class[ex.label].push_back(ex);
  }
  std::vector<Autoencoder> models;
  for (auto& [cls, group] : by_class) {
    AutoencoderConfig acfg;
    acfg.hidden = cfg.hidden;
    acfg.train = cfg.train;
    acfg.train.seed = mix_seed(cfg.train.seed, static_cast<std::uint64_t>(cls));
    models.push_back(train_autoencoder(group, acfg));
  }
  return ReconMonitor(std::move(models));
}

// ---------- monitor container ----------

std::vector<std::uint8_t> serialize_monitor(const Monitor& m, std::uint64_t config_hash) {
  ByteWriter w;
  w.put_magic("OODM");
  w.put_u16(1);
  w.put_u64(config_hash);
  w.put_str(m.kind());
  m.serialize_payload(w);
  return w.bytes;
}

std::unique_ptr<Monitor> deserialize_monitor(const std::vector<std::uint8_t>& bytes,
                                             std::uint64_t* config_hash) {
  ByteReader r(bytes);
  r.expect_magic("OODM", "monitor container");
  const std::uint16_t version = r.get_u16();
  if (version != 1)
    throw FormatError("unsupported monitor container version " + std::to_string(version));
  const std::uint64_t hash = r.get_u64();
  if (config_hash != nullptr) *config_hash = hash;
  const std::string kind = r.get_str();
  if (kind == "oob") return OobMonitor::deserialize_payload(r);
  if (kind == "odin") return OdinMonitor::deserialize_payload(r);
  if (kind == "recon") return ReconMonitor::deserialize_payload(r);
  throw FormatError("unknown monitor kind '" + kind + "'");
}

void save_monitor(const Monitor& m, const std::string& path, std::uint64_t config_hash) {
  write_file_bytes(path, serialize_monitor(m, config_hash));
}

std::unique_ptr<Monitor> load_monitor(const std::string& path, std::uint64_t* config_hash) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  try {
    return deserialize_monitor(bytes, config_hash);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " in " + path);
  }
}

}  // namespace oodbench
