#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsvb/tensor.hpp"

namespace dsvb {

struct CheckpointError : Error {
  using Error::Error;
};

/// Versioned binary container: little-endian magic + version, a JSON
/// metadata blob, then named raw-double tensors. Round-trips are bit-exact.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json metadata;
  std::map<std::string, Tensor> tensors;

  void put(const std::string& name, const Tensor& t) { tensors[name] = t.detach(); }

  const Tensor& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("checkpoint misses tensor '" + name + "'");
    return it->second;
  }

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'D', 'S', 'V', 'B', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint");
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_pod(out, Checkpoint::kVersion);

  const std::string meta = ckpt.metadata.dump();
  detail::write_pod(out, static_cast<std::uint64_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  detail::write_pod(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(tensor.shape().size()));
    for (Index d : tensor.shape()) detail::write_pod(out, static_cast<std::int64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor.values().data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  char magic[sizeof(detail::kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
    throw CheckpointError(path + " is not a checkpoint file");
  std::uint32_t version = 0;
  detail::read_pod(in, version);
  if (version != Checkpoint::kVersion)
    throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version));

  std::uint64_t meta_len = 0;
  detail::read_pod(in, meta_len);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw CheckpointError("truncated checkpoint metadata");

  Checkpoint ckpt;
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": bad metadata: " + e.what());
  }

  std::uint32_t count = 0;
  detail::read_pod(in, count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    detail::read_pod(in, name_len);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rank = 0;
    detail::read_pod(in, rank);
    Shape shape(rank);
    for (auto& d : shape) {
      std::int64_t v = 0;
      detail::read_pod(in, v);
      d = static_cast<Index>(v);
    }
    Tensor t = Tensor::uninitialized(shape);
    in.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw CheckpointError("truncated tensor '" + name + "'");
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

/// Copies checkpoint tensors into an existing named-parameter collection.
template <typename NamedParams>
inline void restore_params(const Checkpoint& ckpt, const NamedParams& params) {
  for (const auto& np : params) {
    const Tensor& stored = ckpt.get(np.name);
    if (stored.shape() != np.tensor.shape())
      throw CheckpointError("tensor '" + np.name + "' shape " + shape_str(stored.shape()) +
                            " does not match model " + shape_str(np.tensor.shape()));
    const_cast<Tensor&>(np.tensor).values() = stored.values();
  }
}

}  // namespace dsvb
