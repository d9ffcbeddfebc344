#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "meshmotion/tensor.hpp"

namespace meshmotion {

enum class Precision : std::uint8_t { Single = 1, Double = 2 };

/// Named-tensor container with string metadata. Values are held in double
/// and written as f32 or f64 depending on `precision`; a single-precision
/// model round-trips bit-exactly either way.
struct Checkpoint {
  Precision precision = Precision::Single;
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor<double>>> tensors;

  const Tensor<double>& tensor(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
  bool has_meta(const std::string& key) const { return metadata.count(key) != 0; }
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& what = "checkpoint");
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace meshmotion
