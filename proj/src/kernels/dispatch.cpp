#include "mdfrac/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace mdfrac::kernels {

namespace {

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            __builtin_cpu_init();
            return detail::avx2_table() && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
            return detail::neon_table() != nullptr;
    }
    return false;
}

const KernelTable* initial_table() {
    if (const char* env = std::getenv("MDFRAC_KERNELS")) {
        const std::string want(env);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
            if (want == isa_name(isa) && cpu_supports(isa)) return &table(isa);
    }
    auto isas = available();
    return &table(isas.back());
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> t{initial_table()};
    return t;
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

const KernelTable& table(Isa isa) {
    if (!cpu_supports(isa)) throw Error("kernel ISA not available: " + std::string(isa_name(isa)));
    switch (isa) {
        case Isa::avx2: return *detail::avx2_table();
        case Isa::neon: return *detail::neon_table();
        default: return *detail::scalar_table();
    }
}

std::vector<Isa> available() {
    std::vector<Isa> out{Isa::scalar};
    for (Isa isa : {Isa::avx2, Isa::neon})
        if (cpu_supports(isa)) out.push_back(isa);
    return out;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

}  // namespace mdfrac::kernels
