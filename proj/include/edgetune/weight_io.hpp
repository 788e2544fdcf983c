#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "edgetune/vit.hpp"

namespace edgetune {

// ETW1 weight file format, little-endian:
//   magic "ETW1" | u32 version | u32 tensor count
//   per tensor: u16 name length | name utf-8 | u8 rank | u64 dims[rank] |
//               u8 dtype (0=f32, 1=f64) | raw row-major payload
// Round trips are bit-exact. Backbone weights and edge-network checkpoints
// share the format.

constexpr u32 kEtw1Version = 1;

struct RawTensor {
  std::string name;
  std::vector<u64> dims;
  Dtype dtype = Dtype::f32;
  std::vector<u8> bytes;

  u64 numel() const {
    u64 n = 1;
    for (u64 d : dims) n *= d;
    return n;
  }
};

std::vector<u8> encode_etw1(const std::vector<RawTensor>& tensors);
std::vector<RawTensor> decode_etw1(std::span<const u8> bytes);

void write_etw1(const std::string& path, const std::vector<RawTensor>& tensors);
std::vector<RawTensor> read_etw1(const std::string& path);

std::vector<u8> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const u8> bytes);

template <typename S>
RawTensor to_raw(const std::string& name, const Tensor<S>& t) {
  RawTensor r;
  r.name = name;
  r.dims.assign(t.shape().begin(), t.shape().end());
  r.dtype = dtype_of<S>();
  r.bytes.resize(t.data().size_bytes());
  std::memcpy(r.bytes.data(), t.data().data(), r.bytes.size());
  return r;
}

template <typename S>
Tensor<S> from_raw(const RawTensor& r) {
  if (r.dtype != dtype_of<S>())
    throw IoError("tensor '" + r.name + "' has dtype tag " +
                  std::to_string(static_cast<int>(r.dtype)) + ", expected " +
                  std::to_string(static_cast<int>(dtype_of<S>())));
  std::vector<i64> shape(r.dims.begin(), r.dims.end());
  Tensor<S> t(std::move(shape));
  if (t.data().size_bytes() != r.bytes.size())
    throw IoError("tensor '" + r.name + "' payload size mismatch");
  std::memcpy(t.mutable_data().data(), r.bytes.data(), r.bytes.size());
  return t;
}

template <typename S>
void save_weights(const std::string& path, const WeightStore<S>& w) {
  std::vector<RawTensor> raw;
  raw.reserve(w.tensors().size());
  for (const auto& [name, t] : w.tensors()) raw.push_back(to_raw(name, t));
  write_etw1(path, raw);
}

template <typename S>
WeightStore<S> load_weights(const std::string& path) {
  WeightStore<S> w;
  for (const auto& r : read_etw1(path)) w.put(r.name, from_raw<S>(r));
  return w;
}

}  // namespace edgetune
