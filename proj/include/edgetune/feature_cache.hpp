#pragma once

#include <atomic>
#include <functional>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "edgetune/sha256.hpp"
#include "edgetune/vit.hpp"

namespace edgetune {

// Content-addressed cache of full FeatureSets, keyed by
// sha256(image bytes || backbone content hash). Storing the full set means
// one backbone forward serves any k and any gather mode. get_or_compute has
// atomic semantics: a key being computed blocks duplicate computation of that
// key only, never the whole cache. Eviction is LRU by payload bytes.
class FeatureCache {
 public:
  using Value = std::shared_ptr<const FeatureSet<float>>;

  explicit FeatureCache(u64 byte_cap) : byte_cap_(byte_cap) {}

  static Digest256 key_for(std::span<const u8> image_bytes, const Digest256& backbone_hash) {
    Sha256 h;
    h.update(image_bytes);
    h.update(backbone_hash);
    return h.finish();
  }

  Value get_or_compute(const Digest256& key, const std::function<FeatureSet<float>()>& compute) {
    std::shared_future<Value> fut;
    std::shared_ptr<std::promise<Value>> own;  // non-null when this call computes
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        ++hits_;
        if (it->second.ready) touch(it->second);
        fut = it->second.future;
      } else {
        ++misses_;
        Entry e;
        e.promise = std::make_shared<std::promise<Value>>();
        e.future = e.promise->get_future().share();
        e.self = key;
        fut = e.future;
        own = e.promise;
        entries_.emplace(key, std::move(e));
      }
    }
    if (own) {
      Value value;
      try {
        value = std::make_shared<const FeatureSet<float>>(compute());
      } catch (...) {
        own->set_exception(std::current_exception());
        std::lock_guard<std::mutex> lock(mu_);
        entries_.erase(key);
        return fut.get();  // rethrows the computation error
      }
      own->set_value(value);
      std::lock_guard<std::mutex> lock(mu_);
      auto it = entries_.find(key);
      if (it != entries_.end() && !it->second.ready) {
        it->second.ready = true;
        it->second.size = set_bytes(*value);
        lru_.push_front(key);
        it->second.lru_pos = lru_.begin();
        bytes_ += it->second.size;
        evict_over_cap();
      }
    }
    return fut.get();
  }

  u64 hits() const { return hits_; }
  u64 misses() const { return misses_; }

  u64 bytes() const {
    std::lock_guard<std::mutex> lock(mu_);
    return bytes_;
  }

  std::size_t entries() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
  }

 private:
  struct DigestHash {
    std::size_t operator()(const Digest256& d) const {
      std::size_t h = 0;
      for (int i = 0; i < 8; ++i) h = (h << 8) | d[static_cast<std::size_t>(i)];
      return h;
    }
  };

  struct Entry {
    std::shared_ptr<std::promise<Value>> promise;
    std::shared_future<Value> future;
    bool ready = false;
    u64 size = 0;
    Digest256 self{};
    std::list<Digest256>::iterator lru_pos;
  };

  static u64 set_bytes(const FeatureSet<float>& fs) {
    u64 n = 0;
    for (const auto& t : fs.features) n += static_cast<u64>(t.numel()) * sizeof(float);
    return n;
  }

  void touch(Entry& e) {
    lru_.erase(e.lru_pos);
    lru_.push_front(e.self);
    e.lru_pos = lru_.begin();
  }

  void evict_over_cap() {
    while (bytes_ > byte_cap_ && !lru_.empty()) {
      const Digest256 victim = lru_.back();
      lru_.pop_back();
      auto it = entries_.find(victim);
      if (it != entries_.end()) {
        bytes_ -= it->second.size;
        entries_.erase(it);
      }
    }
  }

  mutable std::mutex mu_;
  u64 byte_cap_;
  u64 bytes_ = 0;
  std::atomic<u64> hits_{0};
  std::atomic<u64> misses_{0};
  std::unordered_map<Digest256, Entry, DigestHash> entries_;
  std::list<Digest256> lru_;
};

}  // namespace edgetune
