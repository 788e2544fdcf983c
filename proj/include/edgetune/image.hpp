#pragma once

#include "edgetune/tensor.hpp"

namespace edgetune {

// Minimal uncompressed raster: "ETR1" | u8 dtype (2=u8, 0=f32) | u32 channels |
// u32 height | u32 width | row-major channel-major payload. Little-endian.
// These exact bytes are what crosses the wire and what the cache hashes.

struct RasterImage {
  i64 channels = 0;
  i64 height = 0;
  i64 width = 0;
  Dtype dtype = Dtype::u8tag;
  std::vector<u8> payload;

  i64 pixels() const { return channels * height * width; }
};

std::vector<u8> encode_raster(const RasterImage& img);
RasterImage decode_raster(std::span<const u8> bytes);

// u8 payloads map to [0, 1]; f32 payloads pass through.
Tensor<float> raster_to_tensor(const RasterImage& img);
RasterImage raster_from_tensor(const Tensor<float>& t);

}  // namespace edgetune
