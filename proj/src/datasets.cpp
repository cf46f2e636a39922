#include "oodbench/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "oodbench/bytes.hpp"
#include "oodbench/errors.hpp"
#include "oodbench/log.hpp"
#include "oodbench/rng.hpp"

namespace oodbench {

namespace {

constexpr char kMagic[4] = {'O', 'O', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;

// IDX headers are big-endian.
std::uint32_t get_u32_be(ByteReader& r) {
  r.need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | r.data[r.pos + i];
  r.pos += 4;
  return v;
}

std::uint8_t quantize(double v) {
  const double c = std::min(1.0, std::max(0.0, v));
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

IdxData read_idx(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  ByteReader r(bytes);
  const std::uint32_t magic = get_u32_be(r);
  IdxData out;
  if (magic == 0x00000803u) {
    const std::uint32_t count = get_u32_be(r);
    const std::uint32_t rows = get_u32_be(r);
    const std::uint32_t cols = get_u32_be(r);
    out.has_images = true;
    out.images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      r.need(static_cast<std::size_t>(rows) * cols);
      Tensor img({1, rows, cols});
      for (std::size_t p = 0; p < static_cast<std::size_t>(rows) * cols; ++p)
        img.data[p] = static_cast<double>(r.data[r.pos + p]) / 255.0;
      r.pos += static_cast<std::size_t>(rows) * cols;
      out.images.push_back(std::move(img));
    }
  } else if (magic == 0x00000801u) {
    const std::uint32_t count = get_u32_be(r);
    out.has_labels = true;
    out.labels.reserve(count);
    r.need(count);
    for (std::uint32_t i = 0; i < count; ++i)
      out.labels.push_back(static_cast<int>(r.data[r.pos + i]));
    r.pos += count;
  } else {
    throw FormatError("bad idx magic in " + path + " at offset 0");
  }
  return out;
}

std::pair<std::vector<Tensor>, std::vector<int>> read_cifar10_binary(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  constexpr std::size_t kRecord = 3073;
  if (bytes.size() % kRecord != 0)
    throw FormatError("cifar10 file size " + std::to_string(bytes.size()) +
                      " is not a multiple of 3073: " + path);
  const std::size_t n = bytes.size() / kRecord;
  std::vector<Tensor> images;
  std::vector<int> labels;
  images.reserve(n);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    labels.push_back(static_cast<int>(rec[0]));
    Tensor img({3, 32, 32});
    for (std::size_t p = 0; p < 3072; ++p)
      img.data[p] = static_cast<double>(rec[1 + p]) / 255.0;  // channel-planar order kept
    images.push_back(std::move(img));
  }
  return {std::move(images), std::move(labels)};
}

Tensor gray_to_rgb(const Tensor& t) {
  if (t.shape.size() != 3) throw ShapeError("gray_to_rgb expects a {C,H,W} tensor");
  if (t.shape[0] == 3) return t;
  if (t.shape[0] != 1)
    throw ShapeError("gray_to_rgb expects 1 or 3 channels, got " + std::to_string(t.shape[0]));
  Tensor out({3, t.shape[1], t.shape[2]});
  const std::size_t plane = t.shape[1] * t.shape[2];
  for (std::size_t c = 0; c < 3; ++c)
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + c * plane);
  return out;
}

Split split_id(const std::vector<LabeledInstance>& instances, double train_fraction,
               std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ParameterError("train_fraction must lie in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < instances.size(); ++i)
    by_class[instances[i].label].push_back(i);

  Split split;
  Rng rng(seed);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) {
      log::warn("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                " instance(s); sending all to the training side");
      for (std::size_t i : idx) split.train.push_back(instances[i]);
      continue;
    }
    rng.shuffle(idx);
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(idx.size()) + 0.5));
    n_train = std::max<std::size_t>(1, std::min(n_train, idx.size() - 1));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (i < n_train)
        split.train.push_back(instances[idx[i]]);
      else
        split.holdout.push_back(instances[idx[i]]);
    }
  }
  return split;
}

BenchmarkDataset assemble_benchmark(const std::string& name,
                                    const std::vector<LabeledInstance>& id_part,
                                    const std::vector<LabeledInstance>& ood_part,
                                    std::uint64_t stream_seed, bool pure_id_control) {
  if (id_part.empty()) throw IntegrityError("benchmark '" + name + "' has no ID instances");
  if (ood_part.empty() && !pure_id_control)
    throw IntegrityError("benchmark '" + name + "' has no OOD instances");
  std::set<std::string> ids;
  for (const LabeledInstance& inst : id_part) {
    if (inst.origin != Origin::ID)
      throw IntegrityError("instance " + inst.id + " in the ID part is tagged OOD");
    if (inst.variation != "none")
      throw IntegrityError("ID instance " + inst.id + " carries variation '" +
                           inst.variation + "'");
    if (inst.novelty)
      throw IntegrityError("ID instance " + inst.id + " is tagged novelty");
    if (!ids.insert(inst.id).second)
      throw IntegrityError("duplicate instance id " + inst.id);
  }
  for (const LabeledInstance& inst : ood_part) {
    if (inst.origin != Origin::OOD)
      throw IntegrityError("instance " + inst.id + " in the OOD part is tagged ID");
    if (inst.variation == "none")
      throw IntegrityError("OOD instance " + inst.id + " has no variation tag");
    if (!ids.insert(inst.id).second)
      throw IntegrityError("duplicate instance id " + inst.id);
  }

  BenchmarkDataset ds;
  ds.name = name;
  ds.stream_seed = stream_seed;
  ds.instances.reserve(id_part.size() + ood_part.size());
  ds.instances.insert(ds.instances.end(), id_part.begin(), id_part.end());
  ds.instances.insert(ds.instances.end(), ood_part.begin(), ood_part.end());
  Rng rng(stream_seed);
  rng.shuffle(ds.instances);
  ds.id_fraction = static_cast<double>(id_part.size()) /
                   static_cast<double>(ds.instances.size());
  return ds;
}

std::vector<std::uint8_t> serialize_benchmark(const BenchmarkDataset& ds,
                                              std::uint64_t config_hash) {
  if (ds.instances.empty()) throw IntegrityError("refusing to serialize empty benchmark");
  const std::vector<std::size_t>& shape = ds.instances.front().image.shape;
  if (shape.size() != 3) throw ShapeError("benchmark images must be {C,H,W}");
  ByteWriter w;
  w.put_magic(kMagic);
  w.put_u16(kVersion);
  w.put_u64(config_hash);
  w.put_str(ds.name);
  w.put_u64(ds.stream_seed);
  w.put_f64(ds.id_fraction);
  w.put_u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) w.put_u32(static_cast<std::uint32_t>(d));
  w.put_u32(static_cast<std::uint32_t>(ds.instances.size()));
  for (const LabeledInstance& inst : ds.instances) {
    if (inst.image.shape != shape)
      throw ShapeError("instance " + inst.id + " has shape " + shape_str(inst.image.shape) +
                       ", container uses " + shape_str(shape));
    w.put_str(inst.id);
    w.put_u32(static_cast<std::uint32_t>(inst.label));
    w.put_u8(static_cast<std::uint8_t>(inst.origin));
    w.put_u8(inst.novelty ? 1 : 0);
    w.put_str(inst.variation);
    for (double v : inst.image.data) w.put_u8(quantize(v));
  }
  return std::move(w.bytes);
}

BenchmarkDataset deserialize_benchmark(const std::vector<std::uint8_t>& bytes,
                                       std::uint64_t* config_hash) {
  ByteReader r(bytes);
  r.expect_magic(kMagic, "benchmark container");
  const std::uint16_t version = r.get_u16();
  if (version != kVersion)
    throw FormatError("unsupported benchmark container version " + std::to_string(version));
  const std::uint64_t hash = r.get_u64();
  if (config_hash != nullptr) *config_hash = hash;

  BenchmarkDataset ds;
  ds.name = r.get_str();
  ds.stream_seed = r.get_u64();
  ds.id_fraction = r.get_f64();
  const std::uint8_t ndim = r.get_u8();
  if (ndim != 3) throw FormatError("benchmark container image rank must be 3");
  std::vector<std::size_t> shape;
  for (std::uint8_t i = 0; i < ndim; ++i) shape.push_back(r.get_u32());
  const std::size_t numel = Tensor::numel_of(shape);
  const std::uint32_t n = r.get_u32();
  ds.instances.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    LabeledInstance inst;
    inst.id = r.get_str();
    inst.label = static_cast<int>(r.get_u32());
    const std::uint8_t origin = r.get_u8();
    if (origin > 1) throw FormatError("bad origin tag " + std::to_string(origin));
    inst.origin = static_cast<Origin>(origin);
    inst.novelty = r.get_u8() != 0;
    inst.variation = r.get_str();
    if (inst.novelty && inst.origin == Origin::ID)
      throw IntegrityError("novelty instance " + inst.id + " tagged ID");
    inst.image = Tensor(shape);
    r.need(numel);
    for (std::size_t p = 0; p < numel; ++p)
      inst.image.data[p] = static_cast<double>(r.data[r.pos + p]) / 255.0;
    r.pos += numel;
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

void save_benchmark(const BenchmarkDataset& ds, const std::string& path,
                    std::uint64_t config_hash) {
  write_file_bytes(path, serialize_benchmark(ds, config_hash));
}

BenchmarkDataset load_benchmark(const std::string& path, std::uint64_t* config_hash) {
  return deserialize_benchmark(read_file_bytes(path), config_hash);
}

nlohmann::json make_manifest(const BenchmarkDataset& ds,
                             const std::vector<std::string>& sources,
                             const nlohmann::json& fault_template,
                             std::uint64_t config_hash) {
  std::size_t id_count = 0;
  for (const LabeledInstance& inst : ds.instances)
    if (inst.origin == Origin::ID) ++id_count;
  nlohmann::json m;
  m["name"] = ds.name;
  m["sources"] = sources;
  m["fault_template"] = fault_template;
  m["counts"] = {{"id", id_count}, {"ood", ds.instances.size() - id_count}};
  m["stream_seed"] = ds.stream_seed;
  m["config_hash"] = hash_hex(config_hash);
  return m;
}

namespace {

// Glyph renderers; (dx, dy) are offsets from the jittered center, r is the
// jittered radius. Each returns whether the pixel belongs to the glyph.
bool glyph_hit(std::size_t cls, double dx, double dy, double r) {
  const double ax = std::fabs(dx), ay = std::fabs(dy);
  switch (cls) {
    case 0:  // filled disk
      return dx * dx + dy * dy <= r * r;
    case 1:  // square outline
      return std::max(ax, ay) <= r && std::max(ax, ay) > r - 1.6;
    case 2:  // filled triangle, apex up
      return dy >= -r && dy <= r && ax <= (dy + r) * 0.55;
    case 3:  // plus
      return (ax <= 1.4 && ay <= r) || (ay <= 1.4 && ax <= r);
    case 4: {  // ring
      const double d = std::sqrt(dx * dx + dy * dy);
      return d <= r && d > r - 1.7;
    }
    case 5:  // horizontal bar
      return ay <= 1.6 && ax <= r;
    case 6:  // vertical bar
      return ax <= 1.6 && ay <= r;
    case 7:  // main-diagonal stripe
      return std::fabs(dx - dy) <= 1.7 && ax <= r && ay <= r;
    case 8:  // checkerboard
      return ax <= r && ay <= r &&
             ((static_cast<long>(std::floor(dx / 2.0)) +
               static_cast<long>(std::floor(dy / 2.0))) % 2 + 2) % 2 == 0;
    case 9:  // X
      return (std::fabs(dx - dy) <= 1.5 || std::fabs(dx + dy) <= 1.5) && ax <= r && ay <= r;
    case 10:  // L
      return (dx >= -r && dx <= -r + 2.6 && ay <= r) || (dy >= r - 2.6 && dy <= r && ax <= r);
    case 11:  // T
      return (dy <= -r + 2.6 && dy >= -r && ax <= r) || (ax <= 1.4 && ay <= r);
    case 12: {  // diamond outline
      const double d = ax + ay;
      return d <= r && d > r - 2.1;
    }
    default:
      throw ParameterError("synthetic_shapes supports at most 13 classes");
  }
}

}  // namespace

std::vector<LabeledInstance> synthetic_shapes(std::size_t num_classes,
                                              std::size_t per_class,
                                              std::size_t image_size,
                                              std::uint64_t seed, int label_offset,
                                              const std::string& id_prefix) {
  if (num_classes == 0 || num_classes > 13)
    throw ParameterError("synthetic_shapes supports 1..13 classes");
  if (label_offset < 0 ||
      static_cast<std::size_t>(label_offset) + num_classes > 13)
    throw ParameterError("synthetic_shapes glyphs run out past label 12");
  if (image_size < 12) throw ParameterError("synthetic_shapes needs image_size >= 12");
  std::vector<LabeledInstance> out;
  out.reserve(num_classes * per_class);
  const double mid = static_cast<double>(image_size - 1) / 2.0;
  const double base_r = static_cast<double>(image_size) * 0.33;
  std::size_t serial = 0;
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    for (std::size_t k = 0; k < per_class; ++k, ++serial) {
      Rng rng(mix_seed(seed, serial));
      const double cx = mid + rng.uniform(-1.6, 1.6);
      const double cy = mid + rng.uniform(-1.6, 1.6);
      const double r = base_r * rng.uniform(0.8, 1.12);
      const double amp = rng.uniform(0.68, 1.0);
      LabeledInstance inst;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "-%02zu-%04zu", cls, k);
      inst.id = id_prefix + buf;
      inst.label = label_offset + static_cast<int>(cls);
      inst.image = Tensor({1, image_size, image_size});
      for (std::size_t y = 0; y < image_size; ++y) {
        for (std::size_t x = 0; x < image_size; ++x) {
          double v = std::max(0.0, rng.normal(0.06, 0.035));
          if (glyph_hit(static_cast<std::size_t>(label_offset) + cls,
                        static_cast<double>(x) - cx, static_cast<double>(y) - cy, r))
            v = amp + rng.normal(0.0, 0.02);
          inst.image.at3(0, y, x) = std::min(1.0, std::max(0.0, v));
        }
      }
      out.push_back(std::move(inst));
    }
  }
  return out;
}

void mark_novelty(std::vector<LabeledInstance>& instances, const std::string& variation) {
  for (LabeledInstance& inst : instances) {
    inst.origin = Origin::OOD;
    inst.novelty = true;
    inst.variation = variation;
    inst.id += ":" + variation;
  }
}

std::vector<Example> to_examples(const std::vector<LabeledInstance>& instances) {
  std::vector<Example> out;
  out.reserve(instances.size());
  for (const LabeledInstance& inst : instances) out.push_back({inst.image, inst.label});
  return out;
}

}  // namespace oodbench
