// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace jigsaw {

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// kernel after every step. A no-op outside glibc.
void tune_allocator();

}  // namespace jigsaw
