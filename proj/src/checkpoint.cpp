#include "meshmotion/checkpoint.hpp"

#include "meshmotion/binary_io.hpp"

namespace meshmotion {

namespace {
constexpr std::string_view kMagic{"MMCKPT\0\0", 8};
constexpr std::uint8_t kVersion = 1;
}  // namespace

const Tensor<double>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw Error("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw Error("checkpoint has no metadata key '" + key + "'");
  return it->second;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  BinaryWriter w;
  w.put_bytes(kMagic);
  w.put_u8(kVersion);
  w.put_u8(static_cast<std::uint8_t>(ckpt.precision));
  w.put_u64(ckpt.metadata.size());
  for (const auto& [k, v] : ckpt.metadata) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put_u64(ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    w.put_string(name);
    w.put_u64(t.shape().size());
    for (std::size_t d : t.shape()) w.put_u64(d);
    for (double v : t.storage()) {
      if (ckpt.precision == Precision::Single) {
        w.put_f32(static_cast<float>(v));
      } else {
        w.put_f64(v);
      }
    }
  }
  return w.bytes();
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& what) {
  BinaryReader r(bytes, what);
  if (bytes.size() < kMagic.size() || r.take(kMagic.size()) != kMagic) throw Error(what + ": not a checkpoint file");
  const std::uint8_t version = r.u8();
  if (version != kVersion) {
    throw Error(what + ": checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kVersion));
  }
  Checkpoint c;
  const std::uint8_t p = r.u8();
  if (p != 1 && p != 2) throw Error(what + ": unknown precision flag " + std::to_string(p));
  c.precision = static_cast<Precision>(p);
  const std::size_t width = c.precision == Precision::Single ? 4 : 8;
  for (std::uint64_t n = r.count(16); n > 0; --n) {
    std::string k = r.string();
    c.metadata[k] = r.string();
  }
  for (std::uint64_t n = r.count(16); n > 0; --n) {
    std::string name = r.string();
    std::vector<std::size_t> shape(r.count(8));
    for (std::size_t& d : shape) d = r.u64();
    std::size_t total = 1;
    for (std::size_t d : shape) {
      if (d != 0 && total > bytes.size() / d) throw Error(what + ": implausible shape for '" + name + "'");
      total *= d;
    }
    if (total > bytes.size() / width) throw Error(what + ": truncated tensor '" + name + "'");
    std::vector<double> data(total);
    for (double& v : data) v = c.precision == Precision::Single ? static_cast<double>(r.f32()) : r.f64();
    c.tensors.emplace_back(std::move(name), Tensor<double>(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw Error(what + ": trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  BinaryWriter w;
  w.put_bytes(serialize_checkpoint(ckpt));
  w.write_file(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_binary_file(path), path.string());
}

}  // namespace meshmotion
