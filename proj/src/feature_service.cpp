#include "edgetune/feature_service.hpp"

#include <cstring>

namespace edgetune {

namespace {

FeatureFrame feature_reply(const Digest256& input_id, const GatherSpec& spec,
                           const Tensor<float>& gathered) {
  FeatureFrame f;
  f.frame_type = FrameType::feature;
  f.input_id = input_id;
  f.mode = spec.mode;
  f.k = static_cast<u16>(spec.k);
  f.g = static_cast<u16>(spec.g);
  f.dtype = Dtype::f32;
  f.dims.assign(gathered.shape().begin(), gathered.shape().end());
  f.payload.resize(gathered.data().size_bytes());
  std::memcpy(f.payload.data(), gathered.data().data(), f.payload.size());
  return f;
}

}  // namespace

FeatureFrame FeatureService::handle_frame(const FeatureFrame& request) {
  ++requests_;
  const Digest256 input_id = Sha256::digest(request.payload);
  auto fail = [&](ErrorCode code, const std::string& msg) {
    ++errors_;
    return FeatureFrame::make_error(input_id, code, msg);
  };
  if (request.frame_type != FrameType::request)
    return fail(ErrorCode::bad_request, "expected a request frame");
  if (request.dtype != Dtype::u8tag)
    return fail(ErrorCode::bad_request, "request payload must be raw image bytes");

  GatherSpec spec{request.mode, static_cast<i64>(request.k), static_cast<i64>(request.g)};
  const i64 n = backbone_.cfg.n_blocks;
  if (spec.mode == GatherMode::sum && (spec.k < 0 || spec.k > n))
    return fail(ErrorCode::k_out_of_range,
                "k=" + std::to_string(spec.k) + " out of range 0.." + std::to_string(n));
  if (spec.mode == GatherMode::windowed && (spec.g < 1 || spec.g > n + 1))
    return fail(ErrorCode::g_out_of_range,
                "g=" + std::to_string(spec.g) + " out of range 1.." + std::to_string(n + 1));

  RasterImage img;
  try {
    img = decode_raster(request.payload);
  } catch (const Error& e) {
    return fail(ErrorCode::bad_image, e.what());
  }

  try {
    const Digest256 key = FeatureCache::key_for(request.payload, backbone_.hash);
    FeatureCache::Value features = cache_.get_or_compute(key, [&] {
      ++forwards_;
      FeatureSet<float> fs = backbone_.extract(raster_to_tensor(img));
      fs.input_id = input_id;
      return fs;
    });
    return feature_reply(input_id, spec, gather_apply(*features, spec));
  } catch (const Error& e) {
    return fail(ErrorCode::internal, e.what());
  }
}

std::vector<u8> FeatureService::handle(std::span<const u8> request_bytes) {
  FeatureFrame request;
  try {
    request = decode_frame(request_bytes);
  } catch (const FrameError& e) {
    ++requests_;
    ++errors_;
    return encode_frame(FeatureFrame::make_error(Digest256{}, ErrorCode::bad_request, e.what()));
  }
  return encode_frame(handle_frame(request));
}

}  // namespace edgetune
