#include "tdm/kernels.hpp"

#include <cstdlib>
#include <string>

namespace tdm::kernels {

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

const Table& active() {
    static const Table& table = [] () -> const Table& {
        const char* forced = std::getenv("TDM_KERNELS");
        if (forced != nullptr && std::string(forced) == "scalar") {
            return scalar();
        }
        if (const Table* t = avx2()) {
            return *t;
        }
        if (const Table* t = neon()) {
            return *t;
        }
        return scalar();
    }();
    return table;
}

}  // namespace tdm::kernels
