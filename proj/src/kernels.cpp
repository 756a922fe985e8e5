#include "dpin/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "dpin/error.hpp"

namespace dpin::kern {
namespace {

std::atomic<const Backend*> g_active{nullptr};

const Backend& pick_auto() {
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2_supported()) return avx2_backend();
#endif
    return scalar_backend();
}

const Backend& pick(std::string_view name) {
    if (name == "auto") return pick_auto();
    if (name == "scalar") return scalar_backend();
#if defined(__x86_64__) || defined(_M_X64)
    if (name == "avx2") {
        if (!avx2_supported())
            throw ConfigError("kernel backend 'avx2' not supported on this CPU");
        return avx2_backend();
    }
#endif
    throw ConfigError("unknown kernel backend '" + std::string(name) + "'");
}

const Backend& init_from_env() {
    const char* env = std::getenv("DPIN_KERNELS");
    return pick(env && *env ? std::string_view(env) : "auto");
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Backend& active() {
    const Backend* b = g_active.load(std::memory_order_acquire);
    if (!b) {
        b = &init_from_env();
        g_active.store(b, std::memory_order_release);
    }
    return *b;
}

std::string_view active_name() { return active().name; }

void select(std::string_view name) {
    g_active.store(&pick(name), std::memory_order_release);
}

}  // namespace dpin::kern
