#include "mltn/data.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "mltn/errors.hpp"
#include "mltn/rng.hpp"

namespace mltn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;  // u8 payload, 3 dims
constexpr std::uint32_t kLabelMagic = 0x00000801;  // u8 payload, 1 dim

std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in)
        throw FormatError("truncated IDX header while reading " + what);
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

void Dataset::validate() const {
    if (images.rank() != 3)
        throw DataError("dataset images must be a [T, H, W] tensor");
    if (labels.size() != count())
        throw CountMismatch("dataset has " + std::to_string(count()) +
                            " images but " + std::to_string(labels.size()) +
                            " labels");
    for (double v : images.values())
        if (v < 0.0 || v > 1.0)
            throw DataError("image intensity outside [0,1]");
    for (int y : labels)
        if (y < 0) throw DataError("negative label");
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError("cannot open " + images_path);
    const std::uint32_t magic = read_u32_be(img, "image magic");
    if (magic != kImageMagic)
        throw FormatError("bad image magic in " + images_path);
    const std::uint32_t count = read_u32_be(img, "image count");
    const std::uint32_t rows = read_u32_be(img, "rows");
    const std::uint32_t cols = read_u32_be(img, "cols");
    const std::size_t pixels =
        std::size_t(count) * std::size_t(rows) * std::size_t(cols);
    std::vector<unsigned char> raw(pixels);
    img.read(reinterpret_cast<char*>(raw.data()),
             static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(img.gcount()) != pixels)
        throw FormatError("image payload truncated in " + images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("cannot open " + labels_path);
    const std::uint32_t lmagic = read_u32_be(lab, "label magic");
    if (lmagic != kLabelMagic)
        throw FormatError("bad label magic in " + labels_path);
    const std::uint32_t lcount = read_u32_be(lab, "label count");
    if (lcount != count)
        throw CountMismatch("label count " + std::to_string(lcount) +
                            " does not match image count " +
                            std::to_string(count));
    std::vector<unsigned char> lraw(lcount);
    lab.read(reinterpret_cast<char*>(lraw.data()),
             static_cast<std::streamsize>(lcount));
    if (static_cast<std::size_t>(lab.gcount()) != lcount)
        throw FormatError("label payload truncated in " + labels_path);

    Dataset ds;
    ds.images = Tensor({count, rows, cols});
    for (std::size_t i = 0; i < pixels; ++i)
        ds.images[i] = static_cast<double>(raw[i]) / 255.0;
    ds.labels.assign(lraw.begin(), lraw.end());
    ds.source = images_path;
    ds.validate();
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    ds.validate();
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw DataError("cannot open " + images_path + " for writing");
    write_u32_be(img, kImageMagic);
    write_u32_be(img, static_cast<std::uint32_t>(ds.count()));
    write_u32_be(img, static_cast<std::uint32_t>(ds.height()));
    write_u32_be(img, static_cast<std::uint32_t>(ds.width()));
    for (double v : ds.images.values()) {
        const auto byte =
            static_cast<unsigned char>(std::lround(v * 255.0));
        img.put(static_cast<char>(byte));
    }
    if (!img) throw DataError("failed writing " + images_path);

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("cannot open " + labels_path + " for writing");
    write_u32_be(lab, kLabelMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(ds.count()));
    for (int y : ds.labels) lab.put(static_cast<char>(y));
    if (!lab) throw DataError("failed writing " + labels_path);
}

Dataset synth_blobs(std::size_t count, std::size_t height, std::size_t width,
                    std::uint64_t seed) {
    if (height < 8 || width < 8)
        throw ConfigError("synthetic images must be at least 8x8");
    Rng rng(seed);
    Dataset ds;
    ds.images = Tensor({count, height, width});
    ds.labels.resize(count);
    ds.source = "synth_blobs(seed=" + std::to_string(seed) + ")";
    const double sigma = static_cast<double>(std::min(height, width)) / 8.0;
    for (std::size_t t = 0; t < count; ++t) {
        double* img = ds.images.data() + t * height * width;
        for (std::size_t i = 0; i < height * width; ++i)
            img[i] = 0.3 * rng.uniform();
        const int label = static_cast<int>(t % 2);
        ds.labels[t] = label;
        if (label == 1) {
            const double cy = rng.uniform(sigma, static_cast<double>(height - 1) - sigma);
            const double cx = rng.uniform(sigma, static_cast<double>(width - 1) - sigma);
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double dy = static_cast<double>(y) - cy;
                    const double dx = static_cast<double>(x) - cx;
                    img[y * width + x] +=
                        std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                }
        }
        for (std::size_t i = 0; i < height * width; ++i) {
            double v = std::min(1.0, std::max(0.0, img[i]));
            img[i] = std::lround(v * 255.0) / 255.0;  // byte grid
        }
    }
    return ds;
}

std::vector<int> kfold_split(std::size_t count, std::size_t folds,
                             std::uint64_t seed) {
    if (folds < 2) throw ConfigError("need at least 2 folds");
    if (count < folds)
        throw ConfigError("cannot split " + std::to_string(count) +
                          " samples into " + std::to_string(folds) + " folds");
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = count; i-- > 1;) {
        const std::size_t j = rng.below(i + 1);
        std::swap(order[i], order[j]);
    }
    std::vector<int> fold(count);
    for (std::size_t i = 0; i < count; ++i)
        fold[order[i]] = static_cast<int>(i % folds);
    return fold;
}

}  // namespace mltn
