#pragma once

#include <map>
#include <memory>

#include "edgetune/server.hpp"

namespace edgetune {

// One fetched feature map's worth of accounting. payload_bytes is what the
// overhead table reports; the *_bytes fields include frame headers.
struct TransferRecord {
  GatherMode mode = GatherMode::sum;
  u64 request_bytes = 0;
  u64 response_bytes = 0;
  u64 payload_bytes = 0;
  double wall_ms = 0.0;
};

// Edge-side view of the feature extractor. Both implementations speak the
// frame protocol, so a fetched tensor is bit-identical across them.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual Tensor<float> fetch(std::span<const u8> image_bytes, const GatherSpec& spec,
                              TransferRecord* record = nullptr) = 0;
};

// In-process transport: request and reply still round-trip through the codec.
class LoopbackSource : public FeatureSource {
 public:
  explicit LoopbackSource(std::shared_ptr<FeatureService> service)
      : service_(std::move(service)) {}

  Tensor<float> fetch(std::span<const u8> image_bytes, const GatherSpec& spec,
                      TransferRecord* record = nullptr) override;

  FeatureService& service() { return *service_; }

 private:
  std::shared_ptr<FeatureService> service_;
};

// Blocking TCP client. Requests are pure, so a dropped connection is retried
// once with a fresh connection before surfacing an error.
class SocketClient : public FeatureSource {
 public:
  SocketClient(std::string host, u16 port, int timeout_ms = 30000)
      : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms) {}
  ~SocketClient() override;

  Tensor<float> fetch(std::span<const u8> image_bytes, const GatherSpec& spec,
                      TransferRecord* record = nullptr) override;

 private:
  void ensure_connected();
  void disconnect();

  std::string host_;
  u16 port_;
  int timeout_ms_;
  int fd_ = -1;
};

// Mean payload bytes per image, grouped by gather mode, in MB = 2^20 bytes.
struct OverheadRow {
  GatherMode mode;
  u64 images = 0;
  double mb_per_image = 0.0;
};

std::vector<OverheadRow> overhead_report(std::span<const TransferRecord> log);

}  // namespace edgetune
