#include "mltn/flops.hpp"

namespace mltn::flops {

namespace {
thread_local bool g_enabled = false;
thread_local std::uint64_t g_count = 0;
}  // namespace

bool enabled() { return g_enabled; }

void add(std::uint64_t n) {
    if (g_enabled) g_count += n;
}

std::uint64_t count() { return g_count; }

ScopedCounter::ScopedCounter() : previous_(g_enabled) {
    g_enabled = true;
    g_count = 0;
}

ScopedCounter::~ScopedCounter() { g_enabled = previous_; }

std::uint64_t ScopedCounter::count() const { return g_count; }

}  // namespace mltn::flops
