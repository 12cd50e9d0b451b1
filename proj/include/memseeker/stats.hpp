#pragma once

#include <algorithm>
#include <cstdint>

namespace memseeker {

// Per-thread scalar-allocation accounting. Tensor buffers report their element
// counts here so episodes can be profiled without hardware counters.
struct AllocStats {
    long long live = 0;
    long long peak = 0;

    static AllocStats& tls() {
        thread_local AllocStats s;
        return s;
    }

    static void note_alloc(long long n) {
        auto& s = tls();
        s.live += n;
        s.peak = std::max(s.peak, s.live);
    }
    static void note_free(long long n) { tls().live -= n; }

    // Restart peak tracking from the current live count.
    static void reset_peak() { tls().peak = tls().live; }
    static long long peak_scalars() { return tls().peak; }
    static long long live_scalars() { return tls().live; }
};

// Collected while running attention; one instance per episode.
struct RunStats {
    long long peak_attn_width = 0;

    void note_width(long long w) { peak_attn_width = std::max(peak_attn_width, w); }
};

}  // namespace memseeker
