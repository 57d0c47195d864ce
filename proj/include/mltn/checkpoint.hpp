#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mltn {

struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

// Versioned binary container: magic "MLTN", little-endian u32 version, a
// length-prefixed UTF-8 config block, then per-tensor records (name, rank,
// extents, 64-bit little-endian payload). Payload bytes are written
// explicitly little-endian so round trips are bit exact across hosts.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string config_text;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Throws FormatError on a bad magic or version, IntegrityError on
// truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mltn
