#include "mltn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mltn/errors.hpp"

namespace mltn {

namespace {

constexpr char kMagic[4] = {'M', 'L', 'T', 'N'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw IntegrityError("checkpoint truncated");
    return std::uint32_t(buf[0]) | (std::uint32_t(buf[1]) << 8) |
           (std::uint32_t(buf[2]) << 16) | (std::uint32_t(buf[3]) << 24);
}

double get_f64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw IntegrityError("checkpoint truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(buf[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string get_string(std::istream& in) {
    const std::uint32_t len = get_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw IntegrityError("checkpoint truncated");
    return s;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    put_u32(out, Checkpoint::kVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
    out.write(ckpt.config_text.data(),
              static_cast<std::streamsize>(ckpt.config_text.size()));
    put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const NamedTensor& t : ckpt.tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        std::size_t cells = 1;
        for (std::size_t e : t.shape) {
            put_u32(out, static_cast<std::uint32_t>(e));
            cells *= e;
        }
        if (cells != t.data.size())
            throw ShapeMismatch("tensor " + t.name + " shape/payload mismatch");
        for (double v : t.data) put_f64(out, v);
    }
    if (!out) throw DataError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(in);
    if (version != Checkpoint::kVersion)
        throw FormatError("unsupported checkpoint version " +
                          std::to_string(version));
    Checkpoint ckpt;
    ckpt.config_text = get_string(in);
    const std::uint32_t count = get_u32(in);
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = get_string(in);
        const std::uint32_t rank = get_u32(in);
        std::size_t cells = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.shape.push_back(get_u32(in));
            cells *= t.shape.back();
        }
        t.data.reserve(cells);
        for (std::size_t c = 0; c < cells; ++c) t.data.push_back(get_f64(in));
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

}  // namespace mltn
