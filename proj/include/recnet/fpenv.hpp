#pragma once

namespace recnet {

/// While alive, subnormal results are flushed to zero and subnormal inputs
/// read as zero on the current thread. Backward passes through saturated
/// sigmoids produce long runs of subnormals, which are very slow on x86.
/// A no-op on other architectures.
class FlushDenormalsGuard {
 public:
  explicit FlushDenormalsGuard(bool enable = true);
  ~FlushDenormalsGuard();
  FlushDenormalsGuard(const FlushDenormalsGuard&) = delete;
  FlushDenormalsGuard& operator=(const FlushDenormalsGuard&) = delete;

 private:
  unsigned int saved_ = 0;
  bool active_ = false;
};

}  // namespace recnet
