#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ndgrad/tensor.hpp"

namespace ndgrad {
NDGRAD_NS_BEGIN

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Weight container: one line of UTF-8 JSON (name -> shape, byte offset,
// length), a newline, then the raw little-endian IEEE-754 float32 payloads
// concatenated in manifest order. Round trips are bit-exact.
void save_weights(const std::string& path, const NamedTensors& tensors,
                  const nlohmann::json& meta = nlohmann::json::object());

struct WeightFile {
  NamedTensors tensors;
  nlohmann::json meta;

  Tensor find(const std::string& name) const;
};

WeightFile load_weights(const std::string& path);

// FNV-1a over the float32 image of the tensor values, in order. Used to
// verify that frozen parameters stay bit-identical.
uint64_t byte_checksum(const std::vector<Tensor>& tensors);

NDGRAD_NS_END
}  // namespace ndgrad
