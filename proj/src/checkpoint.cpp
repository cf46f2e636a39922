#include "oodbench/checkpoint.hpp"

#include "oodbench/bytes.hpp"
#include "oodbench/errors.hpp"

namespace oodbench {

namespace {
constexpr char kMagic[4] = {'O', 'O', 'D', 'B'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize_network(const Network& net, std::uint64_t config_hash) {
  ByteWriter w;
  w.put_magic(kMagic);
  w.put_u16(kVersion);
  w.put_u64(config_hash);
  w.put_u8(static_cast<std::uint8_t>(net.input_shape.size()));
  for (std::size_t d : net.input_shape) w.put_u32(static_cast<std::uint32_t>(d));
  w.put_u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const LayerSpec& s : net.layers) {
    w.put_u8(static_cast<std::uint8_t>(s.kind));
    w.put_u32(static_cast<std::uint32_t>(s.in));
    w.put_u32(static_cast<std::uint32_t>(s.out));
    w.put_u32(static_cast<std::uint32_t>(s.in_ch));
    w.put_u32(static_cast<std::uint32_t>(s.out_ch));
    w.put_u32(static_cast<std::uint32_t>(s.kh));
    w.put_u32(static_cast<std::uint32_t>(s.kw));
    w.put_u32(static_cast<std::uint32_t>(s.stride));
  }
  w.put_u32(static_cast<std::uint32_t>(net.capture_points.size()));
  for (std::size_t c : net.capture_points) w.put_u32(static_cast<std::uint32_t>(c));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    for (double v : net.weights[i].data) w.put_f64(v);
    for (double v : net.biases[i].data) w.put_f64(v);
  }
  return std::move(w.bytes);
}

Network deserialize_network(const std::vector<std::uint8_t>& bytes,
                            std::uint64_t* config_hash) {
  ByteReader r(bytes);
  r.expect_magic(kMagic, "model checkpoint");
  const std::uint16_t version = r.get_u16();
  if (version != kVersion)
    throw FormatError("unsupported model checkpoint version " + std::to_string(version));
  const std::uint64_t hash = r.get_u64();
  if (config_hash != nullptr) *config_hash = hash;

  Network net;
  const std::uint8_t ndim = r.get_u8();
  for (std::uint8_t i = 0; i < ndim; ++i) net.input_shape.push_back(r.get_u32());
  const std::uint32_t n_layers = r.get_u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec s;
    const std::uint8_t kind = r.get_u8();
    if (kind > 2) throw FormatError("unknown layer kind " + std::to_string(kind));
    s.kind = static_cast<LayerKind>(kind);
    s.in = r.get_u32();
    s.out = r.get_u32();
    s.in_ch = r.get_u32();
    s.out_ch = r.get_u32();
    s.kh = r.get_u32();
    s.kw = r.get_u32();
    s.stride = r.get_u32();
    net.layers.push_back(s);
  }
  const std::uint32_t n_capture = r.get_u32();
  for (std::uint32_t i = 0; i < n_capture; ++i) net.capture_points.push_back(r.get_u32());

  net.weights.resize(net.layers.size());
  net.biases.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& s = net.layers[i];
    if (s.kind == LayerKind::Dense) {
      net.weights[i] = Tensor({s.out, s.in});
      net.biases[i] = Tensor({s.out});
    } else if (s.kind == LayerKind::Conv2D) {
      net.weights[i] = Tensor({s.out_ch, s.in_ch, s.kh, s.kw});
      net.biases[i] = Tensor({s.out_ch});
    }
    for (double& v : net.weights[i].data) v = r.get_f64();
    for (double& v : net.biases[i].data) v = r.get_f64();
  }
  // Round-trip sanity: the descriptor table must form a valid chain.
  output_shape(net, net.layers.size());
  return net;
}

void save_network(const Network& net, const std::string& path, std::uint64_t config_hash) {
  write_file_bytes(path, serialize_network(net, config_hash));
}

Network load_network(const std::string& path, std::uint64_t* config_hash) {
  return deserialize_network(read_file_bytes(path), config_hash);
}

}  // namespace oodbench
