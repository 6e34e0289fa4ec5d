// Copyright 2026 uttenc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef UTTENC_ALLOC_HPP_
#define UTTENC_ALLOC_HPP_

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace uttenc {

/// Training allocates and frees many multi-megabyte activation buffers per
/// step. glibc serves those with mmap by default and returns them to the
/// kernel on every free; raising both thresholds keeps them in the heap.
/// No-op on other C libraries.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace uttenc

#endif  // UTTENC_ALLOC_HPP_
