#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "oodbench/tensor.hpp"
#include "oodbench/training.hpp"

namespace oodbench {

enum class Origin : std::uint8_t { ID = 0, OOD = 1 };

inline std::string origin_str(Origin o) { return o == Origin::ID ? "ID" : "OOD"; }

// One benchmark instance. Invariants: novelty implies origin OOD;
// variation == "none" exactly for ID instances.
struct LabeledInstance {
  std::string id;
  Tensor image;  // {C,H,W}, values in [0,1]
  int label = 0;
  Origin origin = Origin::ID;
  std::string variation = "none";
  bool novelty = false;
};

// Instances are stored in final stream order (seeded shuffle at assembly).
struct BenchmarkDataset {
  std::string name;
  std::vector<LabeledInstance> instances;
  std::uint64_t stream_seed = 0;
  double id_fraction = 1.0;
};

// IDX payload: one of the two record kinds, depending on the file's magic.
struct IdxData {
  std::vector<Tensor> images;  // each {1,R,C}, u8 values scaled to [0,1]
  std::vector<int> labels;
  bool has_images = false;
  bool has_labels = false;
};

// Reads an IDX image (magic 0x00000803) or label (0x00000801) file.
// Malformed or truncated input raises FormatError naming the byte offset.
IdxData read_idx(const std::string& path);

// 3073-byte records: label byte + 3x1024 channel-planar pixels -> {3,32,32}.
std::pair<std::vector<Tensor>, std::vector<int>> read_cifar10_binary(const std::string& path);

// {1,H,W} -> {3,H,W} by replication; 3-channel input passes through.
Tensor gray_to_rgb(const Tensor& t);

struct Split {
  std::vector<LabeledInstance> train;
  std::vector<LabeledInstance> holdout;
};

// Stratified split. Classes with fewer than 2 instances go entirely to the
// training side with a warning. Per-class train count is clamped so both
// sides stay non-empty when the class has at least 2 instances.
Split split_id(const std::vector<LabeledInstance>& instances, double train_fraction,
               std::uint64_t seed);

// Concatenates ID and OOD parts and applies the seeded stream shuffle.
// Tag inconsistencies (wrong origin, novelty on ID, duplicate ids, missing
// OOD part outside control runs) raise IntegrityError.
BenchmarkDataset assemble_benchmark(const std::string& name,
                                    const std::vector<LabeledInstance>& id_part,
                                    const std::vector<LabeledInstance>& ood_part,
                                    std::uint64_t stream_seed,
                                    bool pure_id_control = false);

// Benchmark container: "OODS" magic, u16 version, provenance hash, stream
// metadata, homogeneous image shape, 8-bit pixel payload per instance.
std::vector<std::uint8_t> serialize_benchmark(const BenchmarkDataset& ds,
                                              std::uint64_t config_hash);
BenchmarkDataset deserialize_benchmark(const std::vector<std::uint8_t>& bytes,
                                       std::uint64_t* config_hash = nullptr);
void save_benchmark(const BenchmarkDataset& ds, const std::string& path,
                    std::uint64_t config_hash);
BenchmarkDataset load_benchmark(const std::string& path,
                                std::uint64_t* config_hash = nullptr);

nlohmann::json make_manifest(const BenchmarkDataset& ds,
                             const std::vector<std::string>& sources,
                             const nlohmann::json& fault_template,
                             std::uint64_t config_hash);

// Procedural grayscale glyph corpus; 13 distinct glyphs exist in total.
// Instances come out ID-tagged; label = label_offset + class index, and the
// drawn glyph follows the label, so offset corpora use disjoint shapes.
std::vector<LabeledInstance> synthetic_shapes(std::size_t num_classes,
                                              std::size_t per_class,
                                              std::size_t image_size,
                                              std::uint64_t seed,
                                              int label_offset = 0,
                                              const std::string& id_prefix = "syn");

// Re-tags foreign-class instances as novelty OOD with the given variation tag.
void mark_novelty(std::vector<LabeledInstance>& instances, const std::string& variation);

std::vector<Example> to_examples(const std::vector<LabeledInstance>& instances);

}  // namespace oodbench
