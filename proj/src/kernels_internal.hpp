#pragma once

#include "freqflow/kernels.hpp"

// Backend tables, shared between the per-backend translation units and the
// dispatcher. Not part of the public interface.

namespace fq::kern {

const Ops& scalar_table();
#if defined(FREQFLOW_X86_KERNELS)
const Ops& avx2_table();
const Ops& avx512_table();
#endif

}  // namespace fq::kern
