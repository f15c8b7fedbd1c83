#include "ndgrad/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ndgrad {
NDGRAD_NS_BEGIN

static_assert(std::endian::native == std::endian::little,
              "weight container assumes a little-endian host");

void save_weights(const std::string& path, const NamedTensors& tensors,
                  const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["format"] = "ndgrad-weights-v1";
  manifest["meta"] = meta;
  auto& list = manifest["tensors"] = nlohmann::json::array();
  size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const size_t bytes = t.size() * sizeof(float);
    list.push_back({{"name", name},
                    {"shape", t.shape()},
                    {"offset", offset},
                    {"length", bytes}});
    offset += bytes;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_weights: cannot open " + path);
  out << manifest.dump() << '\n';
  std::vector<float> buf;
  for (const auto& [name, t] : tensors) {
    buf.resize(t.size());
    for (size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t.at(i));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_weights: write failed for " + path);
}

WeightFile load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_weights: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("load_weights: missing manifest");
  nlohmann::json manifest = nlohmann::json::parse(header);
  if (manifest.value("format", "") != "ndgrad-weights-v1")
    throw std::runtime_error("load_weights: unrecognized container format in " + path);

  const std::streampos payload_start = in.tellg();
  WeightFile wf;
  wf.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    const Shape shape = entry.at("shape").get<Shape>();
    const size_t offset = entry.at("offset");
    const size_t length = entry.at("length");
    const size_t count = length / sizeof(float);
    if (count != shape_numel(shape))
      throw std::runtime_error("load_weights: payload length disagrees with shape for " + name);
    std::vector<float> buf(count);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(length));
    if (!in) throw std::runtime_error("load_weights: truncated payload for " + name);
    std::vector<real> vals(count);
    for (size_t i = 0; i < count; ++i) vals[i] = static_cast<real>(buf[i]);
    wf.tensors.emplace_back(name, Tensor::from_data(shape, std::move(vals)));
  }
  return wf;
}

Tensor WeightFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("weight container has no tensor named " + name);
}

uint64_t byte_checksum(const std::vector<Tensor>& tensors) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : tensors) {
    for (size_t i = 0; i < t.size(); ++i) {
      const float f = static_cast<float>(t.at(i));
      uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

NDGRAD_NS_END
}  // namespace ndgrad
