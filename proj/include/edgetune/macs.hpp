#pragma once

#include <cstdint>

#include "edgetune/common.hpp"

namespace edgetune::macs {

// Thread-local multiply-accumulate counter. Only matrix/convolution products
// contribute (norms, softmax, bias adds and activations do not), matching the
// closed-form cost models.

inline u64*& current() {
  thread_local u64* ptr = nullptr;
  return ptr;
}

inline void add(u64 n) {
  if (u64* c = current()) *c += n;
}

// Counts MACs executed on this thread while alive.
class Scoped {
 public:
  Scoped() : prev_(current()) { current() = &count_; }
  ~Scoped() { current() = prev_; }
  Scoped(const Scoped&) = delete;
  Scoped& operator=(const Scoped&) = delete;
  u64 count() const { return count_; }

 private:
  u64 count_ = 0;
  u64* prev_;
};

}  // namespace edgetune::macs
