#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "mafea/tensor.hpp"

namespace mafea::io {

// Single-tensor record: magic "MTNSR1", u32 rank, u32 extents, then the
// scalars as raw 64-bit reals. Everything little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

/// Checkpoint container: UTF-8 names mapped to tensor records plus free-form
/// text entries (config echo, notes). Order is sorted by name for stable bytes.
struct Archive {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> texts;

    void save(const std::string& path) const;
    static Archive load(const std::string& path);
};

/// 16-bit grayscale PGM (P5, maxval 65535). Values are multiplied by `scale`
/// and clamped; the scale is recorded in a header comment so the image can be
/// read back quantitatively.
void write_pgm16(const std::string& path, const Tensor& map2d, double scale);

}  // namespace mafea::io
