#pragma once

#include <string>
#include <vector>

#include "mltn/tensor.hpp"

namespace mltn {

// Labelled image collection with intensities in [0,1].
struct Dataset {
    Tensor images;              // [T, H, W]
    std::vector<int> labels;    // length T, values in [0, classes)
    std::vector<int> fold_of;   // fold id per sample; empty until assigned
    std::string source;

    std::size_t count() const { return images.rank() == 3 ? images.shape()[0] : 0; }
    std::size_t height() const { return images.rank() == 3 ? images.shape()[1] : 0; }
    std::size_t width() const { return images.rank() == 3 ? images.shape()[2] : 0; }

    void validate() const;
};

// IDX container: big-endian magic (0x00000803 images / 0x00000801 labels),
// big-endian 32-bit extents, unsigned-byte payload. Pixels are scaled by
// 1/255 on load and quantised back on write.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path);

// Deterministic synthetic binary task: class 1 images contain a bright
// Gaussian blob (peak 1.0, sigma = min(H,W)/8) over a uniform noise
// background of amplitude 0.3; class 0 is background only. Values are
// quantised to the byte grid so IDX round trips are exact.
Dataset synth_blobs(std::size_t count, std::size_t height, std::size_t width,
                    std::uint64_t seed);

// Shuffled partition of [0, count) into folds of size differing by at most
// one. Deterministic in the seed across platforms.
std::vector<int> kfold_split(std::size_t count, std::size_t folds,
                             std::uint64_t seed);

}  // namespace mltn
