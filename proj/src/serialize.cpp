#include "mafea/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mafea::io {

namespace {

constexpr char kTensorMagic[6] = {'M', 'T', 'N', 'S', 'R', '1'};
constexpr char kArchiveMagic[7] = {'M', 'T', 'A', 'R', 'C', 'H', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated stream (u32)");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated stream (u64)");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path);
    return in;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kTensorMagic, sizeof(kTensorMagic));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (Index d = 0; d < t.rank(); ++d) put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
    for (double v : t.values()) put_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, kTensorMagic, 6) != 0)
        throw DataError("bad tensor record magic");
    std::uint32_t rank = get_u32(in);
    if (rank > 8) throw DataError("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<Index>(get_u32(in));
    Index n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = get_f64(in);
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
    auto out = open_out(path);
    write_tensor(out, t);
    if (!out) throw DataError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
    auto in = open_in(path);
    return read_tensor(in);
}

void Archive::save(const std::string& path) const {
    auto out = open_out(path);
    out.write(kArchiveMagic, sizeof(kArchiveMagic));
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    put_u32(out, static_cast<std::uint32_t>(texts.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(out, t);
    }
    for (const auto& [name, text] : texts) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
    }
    if (!out) throw DataError("write failed: " + path);
}

Archive Archive::load(const std::string& path) {
    auto in = open_in(path);
    char magic[7];
    if (!in.read(magic, 7) || std::memcmp(magic, kArchiveMagic, 7) != 0)
        throw DataError("bad archive magic in " + path);
    std::uint32_t n_tensors = get_u32(in);
    std::uint32_t n_texts = get_u32(in);
    Archive a;
    auto read_name = [&in]() {
        std::uint32_t len = get_u32(in);
        if (len > 4096) throw DataError("implausible archive entry name length");
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw DataError("truncated archive entry name");
        return name;
    };
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = read_name();
        a.tensors.emplace(name, read_tensor(in));
    }
    for (std::uint32_t i = 0; i < n_texts; ++i) {
        std::string name = read_name();
        std::uint64_t len = get_u64(in);
        if (len > (1u << 26)) throw DataError("implausible archive text length");
        std::string text(static_cast<std::size_t>(len), '\0');
        if (!in.read(text.data(), static_cast<std::streamsize>(len)))
            throw DataError("truncated archive text");
        a.texts.emplace(std::move(name), std::move(text));
    }
    return a;
}

void write_pgm16(const std::string& path, const Tensor& map2d, double scale) {
    const Tensor* m = &map2d;
    Tensor squeezed;
    if (map2d.rank() == 3 && map2d.dim(0) == 1) {
        squeezed = map2d;  // same storage; treat as [H,W]
        m = &squeezed;
    } else if (map2d.rank() != 2) {
        throw ConfigError("write_pgm16 expects a [H,W] or [1,H,W] map, got " +
                          shape_to_string(map2d.shape()));
    }
    Index h = m->dim(m->rank() - 2), w = m->dim(m->rank() - 1);
    auto out = open_out(path);
    out << "P5\n# scale=" << scale << " (pixel = clamp(round(value*scale), 0, 65535))\n"
        << w << " " << h << "\n65535\n";
    for (double v : m->values()) {
        long p = std::lround(v * scale);
        p = std::clamp(p, 0L, 65535L);
        // PGM 16-bit samples are most-significant byte first
        char hi = static_cast<char>((p >> 8) & 0xff);
        char lo = static_cast<char>(p & 0xff);
        out.write(&hi, 1);
        out.write(&lo, 1);
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace mafea::io
