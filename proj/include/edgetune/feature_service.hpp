#pragma once

#include "edgetune/feature_cache.hpp"
#include "edgetune/frame.hpp"
#include "edgetune/image.hpp"

namespace edgetune {

// Server-side core: decode a request frame, run the (cached) backbone, gather,
// encode the reply. Transport-agnostic; the TCP server and the loopback
// client both call handle(). Malformed input produces an error frame, never
// an exception.
class FeatureService {
 public:
  FeatureService(Backbone<float> backbone, u64 cache_cap_bytes)
      : backbone_(std::move(backbone)), cache_(cache_cap_bytes) {}

  std::vector<u8> handle(std::span<const u8> request_bytes);
  FeatureFrame handle_frame(const FeatureFrame& request);

  const ViTConfig& config() const { return backbone_.cfg; }
  const Digest256& backbone_hash() const { return backbone_.hash; }

  u64 backbone_forwards() const { return forwards_; }
  u64 requests() const { return requests_; }
  u64 error_replies() const { return errors_; }
  const FeatureCache& cache() const { return cache_; }

 private:
  Backbone<float> backbone_;
  FeatureCache cache_;
  std::atomic<u64> forwards_{0};
  std::atomic<u64> requests_{0};
  std::atomic<u64> errors_{0};
};

}  // namespace edgetune
