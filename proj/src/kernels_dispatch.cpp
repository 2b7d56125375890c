#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#include "kernels_internal.hpp"

namespace fq::kern {
namespace {

Backend g_selected = Backend::scalar;
bool g_initialized = false;

Backend from_env_or_detect() {
    if (const char* env = std::getenv("FREQFLOW_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) return Backend::avx2;
        if (std::strcmp(env, "avx512") == 0) return Backend::avx512;
        throw std::runtime_error(std::string("FREQFLOW_KERNELS: unknown backend '") +
                                 env + "' (expected scalar|avx2|avx512)");
    }
    return detect();
}

}  // namespace

bool supported(Backend b) {
#if defined(FREQFLOW_X86_KERNELS)
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
        case Backend::avx512:
            return __builtin_cpu_supports("avx512f");
    }
    return false;
#else
    return b == Backend::scalar;
#endif
}

Backend detect() {
    if (supported(Backend::avx512)) return Backend::avx512;
    if (supported(Backend::avx2)) return Backend::avx2;
    return Backend::scalar;
}

const Ops& table(Backend b) {
#if defined(FREQFLOW_X86_KERNELS)
    switch (b) {
        case Backend::scalar:
            return scalar_table();
        case Backend::avx2:
            return avx2_table();
        case Backend::avx512:
            return avx512_table();
    }
#endif
    return scalar_table();
}

const char* backend_name(Backend b) { return table(b).name; }

void select(Backend b) {
    if (!supported(b)) {
        throw std::runtime_error(std::string("kernel backend '") +
                                 backend_name(b) + "' not supported on this CPU");
    }
    g_selected = b;
    g_initialized = true;
}

const Ops& active() {
    if (!g_initialized) select(from_env_or_detect());
    return table(g_selected);
}

}  // namespace fq::kern
