#pragma once

#include <cstdint>

namespace mltn::flops {

// Thread-local multiply counter. Kernels report the exact number of scalar
// multiplications they execute; additions, divisions and transcendental
// calls are not counted. Disabled counting costs one predictable branch.

bool enabled();
void add(std::uint64_t n);
std::uint64_t count();

// Enables counting (and zeroes the counter) for the lifetime of the object.
class ScopedCounter {
public:
    ScopedCounter();
    ~ScopedCounter();
    ScopedCounter(const ScopedCounter&) = delete;
    ScopedCounter& operator=(const ScopedCounter&) = delete;
    std::uint64_t count() const;

private:
    bool previous_;
};

}  // namespace mltn::flops
