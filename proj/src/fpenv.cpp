#include "recnet/fpenv.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <xmmintrin.h>
#define RECNET_HAS_MXCSR 1
#endif

namespace recnet {

FlushDenormalsGuard::FlushDenormalsGuard(bool enable) {
#ifdef RECNET_HAS_MXCSR
  if (!enable) return;
  saved_ = _mm_getcsr();
  _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
  active_ = true;
#else
  (void)enable;
#endif
}

FlushDenormalsGuard::~FlushDenormalsGuard() {
#ifdef RECNET_HAS_MXCSR
  if (active_) _mm_setcsr(saved_);
#endif
}

}  // namespace recnet
