#pragma once

// Op-level parallelism cap. ADGAN_THREADS limits the number of worker
// threads any operator may use; compute kernels stay single-threaded unless
// the cap allows more, and results are deterministic for a fixed cap.

#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

namespace adgan {

inline int thread_cap() {
    static const int cap = [] {
        const char* env = std::getenv("ADGAN_THREADS");
        if (!env || !*env) {
            unsigned hw = std::thread::hardware_concurrency();
            return hw == 0 ? 1 : static_cast<int>(hw);
        }
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw std::invalid_argument("ADGAN_THREADS must be a positive integer, got '" +
                                        std::string(env) + "'");
        return static_cast<int>(v);
    }();
    return cap;
}

}  // namespace adgan
