#include "edgetune/image.hpp"

#include <cstring>

namespace edgetune {

namespace {
constexpr std::array<u8, 4> kMagic = {'E', 'T', 'R', '1'};

void put_u32(std::vector<u8>& out, u32 v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

u32 get_u32(std::span<const u8> b, std::size_t pos) {
  u32 v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<u32>(b[pos + i]) << (8 * i);
  return v;
}
}  // namespace

std::vector<u8> encode_raster(const RasterImage& img) {
  if (img.dtype != Dtype::u8tag && img.dtype != Dtype::f32)
    throw IoError("raster: dtype must be u8 or f32");
  if (img.payload.size() != static_cast<std::size_t>(img.pixels()) * dtype_size(img.dtype))
    throw IoError("raster: payload does not match dimensions");
  std::vector<u8> out;
  out.reserve(17 + img.payload.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(static_cast<u8>(img.dtype));
  put_u32(out, static_cast<u32>(img.channels));
  put_u32(out, static_cast<u32>(img.height));
  put_u32(out, static_cast<u32>(img.width));
  out.insert(out.end(), img.payload.begin(), img.payload.end());
  return out;
}

RasterImage decode_raster(std::span<const u8> bytes) {
  if (bytes.size() < 17 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
    throw IoError("raster: bad header");
  RasterImage img;
  const u8 dt = bytes[4];
  if (dt != static_cast<u8>(Dtype::u8tag) && dt != static_cast<u8>(Dtype::f32))
    throw IoError("raster: bad dtype tag");
  img.dtype = static_cast<Dtype>(dt);
  img.channels = get_u32(bytes, 5);
  img.height = get_u32(bytes, 9);
  img.width = get_u32(bytes, 13);
  const u64 want = static_cast<u64>(img.pixels()) * dtype_size(img.dtype);
  if (bytes.size() != 17 + want) throw IoError("raster: payload size mismatch");
  img.payload.assign(bytes.begin() + 17, bytes.end());
  return img;
}

Tensor<float> raster_to_tensor(const RasterImage& img) {
  Tensor<float> t({img.channels, img.height, img.width});
  auto out = t.mutable_data();
  if (img.dtype == Dtype::u8tag) {
    for (i64 i = 0; i < img.pixels(); ++i)
      out[static_cast<std::size_t>(i)] =
          static_cast<float>(img.payload[static_cast<std::size_t>(i)]) / 255.0f;
  } else {
    std::memcpy(out.data(), img.payload.data(), img.payload.size());
  }
  return t;
}

RasterImage raster_from_tensor(const Tensor<float>& t) {
  if (t.rank() != 3) throw IoError("raster: tensor must be channels x height x width");
  RasterImage img;
  img.channels = t.dim(0);
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.dtype = Dtype::f32;
  img.payload.resize(t.data().size_bytes());
  std::memcpy(img.payload.data(), t.data().data(), img.payload.size());
  return img;
}

}  // namespace edgetune
