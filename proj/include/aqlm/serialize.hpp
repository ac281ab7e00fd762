#pragma once

// On-disk formats.
//
// .aqlm (one quantized layer), all integers little-endian:
//   0  "AQL1"
//   4  u16 version (1)
//   6  u16 storage tag (0 = f32; 1 = f16, reserved and rejected)
//   8  u32 d_out
//   12 u32 d_in
//   16 u32 group size g
//   20 u16 number of codebooks M
//   22 u8  code bits B
//   23 u8  reserved, zero
//   24 u32 CRC-32 of bytes [0, 24)
//   28 codebooks: M x 2^B x g reals, codeword-major
//      scales: d_out reals
//      codes: d_out * (d_in / g) * M fields of B bits, ordered (i, j, m) row-major.
//      Field n occupies stream bits [n*B, (n+1)*B); bit b of the stream is bit
//      (b % 8) of byte b / 8, least significant first. Padding bits are zero.
//
// DTEN (dense tensor):
//   0  "DTEN"
//   4  u32 dtype (0 = f32, 1 = f64)
//   8  u32 ndim (1 or 2)
//   12 u64 dims[ndim]
//   .. row-major values

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "aqlm/errors.hpp"
#include "aqlm/format.hpp"
#include "aqlm/linalg.hpp"

namespace aqlm {

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int b = 0; b < 2; ++b) bytes_.push_back(std::uint8_t(v >> (8 * b)));
    }
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b) bytes_.push_back(std::uint8_t(v >> (8 * b)));
    }
    void u64(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) bytes_.push_back(std::uint8_t(v >> (8 * b)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
    void tag(const char (&magic)[5]) {
        for (int b = 0; b < 4; ++b) bytes_.push_back(std::uint8_t(magic[b]));
    }

    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(std::string("truncated stream while reading ") + what, data_.size());
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return data_[pos_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(data_[pos_] | (data_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= std::uint32_t(data_[pos_ + b]) << (8 * b);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= std::uint64_t(data_[pos_ + b]) << (8 * b);
        pos_ += 8;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    void expect_magic(const char (&magic)[5]) {
        need(4, "magic");
        for (int b = 0; b < 4; ++b)
            if (data_[pos_ + b] != std::uint8_t(magic[b]))
                throw FormatError(std::string("bad magic, expected \"") + magic + "\"", pos_ + b);
        pos_ += 4;
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, data.data(), static_cast<uInt>(data.size()));
    return static_cast<std::uint32_t>(crc);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace detail

inline constexpr std::uint16_t kAqlmVersion = 1;
inline constexpr std::size_t kAqlmHeaderSize = 28;

enum class StorageTag : std::uint16_t { f32 = 0, f16 = 1 };

inline std::size_t packed_code_bytes(std::size_t count, std::size_t bits) { return (count * bits + 7) / 8; }

inline std::vector<std::uint8_t> pack_codes(std::span<const std::uint16_t> codes, std::size_t bits) {
    if (bits < 1 || bits > 16) throw InvalidInput("pack_codes: bits must be in [1, 16]");
    std::vector<std::uint8_t> out(packed_code_bytes(codes.size(), bits), 0);
    std::size_t pos = 0;
    for (std::uint16_t c : codes) {
        if (bits < 16 && c >= (1u << bits))
            throw InvalidInput("pack_codes: code " + std::to_string(c) + " needs more than " +
                               std::to_string(bits) + " bits");
        for (std::size_t b = 0; b < bits; ++b, ++pos)
            if ((c >> b) & 1u) out[pos / 8] |= std::uint8_t(1u << (pos % 8));
    }
    return out;
}

// `base_offset` is the position of `packed` inside the enclosing stream, for error reporting.
inline std::vector<std::uint16_t> unpack_codes(std::span<const std::uint8_t> packed, std::size_t count,
                                               std::size_t bits, std::size_t base_offset = 0) {
    if (bits < 1 || bits > 16) throw InvalidInput("unpack_codes: bits must be in [1, 16]");
    if (packed.size() < packed_code_bytes(count, bits))
        throw FormatError("truncated code stream", base_offset + packed.size());
    std::vector<std::uint16_t> out(count, 0);
    std::size_t pos = 0;
    for (std::size_t n = 0; n < count; ++n) {
        std::uint32_t v = 0;
        for (std::size_t b = 0; b < bits; ++b, ++pos)
            if ((packed[pos / 8] >> (pos % 8)) & 1u) v |= 1u << b;
        out[n] = static_cast<std::uint16_t>(v);
    }
    for (; pos < packed.size() * 8; ++pos)
        if ((packed[pos / 8] >> (pos % 8)) & 1u)
            throw FormatError("non-zero padding bits after last code", base_offset + pos / 8);
    return out;
}

inline std::vector<std::uint8_t> serialize(const QuantizedLayer<float>& layer) {
    layer.validate();
    detail::ByteWriter w;
    w.tag("AQL1");
    w.u16(kAqlmVersion);
    w.u16(static_cast<std::uint16_t>(StorageTag::f32));
    w.u32(static_cast<std::uint32_t>(layer.d_out));
    w.u32(static_cast<std::uint32_t>(layer.d_in));
    w.u32(static_cast<std::uint32_t>(layer.group_size()));
    w.u16(static_cast<std::uint16_t>(layer.num_codebooks()));
    w.u8(static_cast<std::uint8_t>(layer.config.code_bits));
    w.u8(0);
    w.u32(detail::crc32_of(w.bytes()));
    for (const auto& cb : layer.codebooks)
        for (float v : cb.data) w.f32(v);
    for (float s : layer.scales) w.f32(s);
    w.raw(pack_codes(layer.codes.data, layer.config.code_bits));
    return std::move(w.bytes());
}

inline QuantizedLayer<float> deserialize(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("AQL1");
    const auto version = r.u16("version");
    const auto tag = r.u16("storage tag");
    const auto d_out = r.u32("d_out");
    const auto d_in = r.u32("d_in");
    const auto group = r.u32("group size");
    const auto books = r.u16("codebook count");
    const auto bits = r.u8("code bits");
    const auto reserved = r.u8("reserved byte");
    const auto crc = r.u32("header checksum");
    if (crc != detail::crc32_of(bytes.subspan(0, 24))) throw FormatError("header checksum mismatch", 24);
    if (version != kAqlmVersion) throw FormatError("unsupported version " + std::to_string(version), 4);
    if (tag == static_cast<std::uint16_t>(StorageTag::f16))
        throw FormatError("half-precision storage is reserved and not supported", 6);
    if (tag != static_cast<std::uint16_t>(StorageTag::f32))
        throw FormatError("unknown storage tag " + std::to_string(tag), 6);
    if (d_out == 0) throw FormatError("d_out is zero", 8);
    if (d_in == 0) throw FormatError("d_in is zero", 12);
    if (group == 0 || d_in % group != 0) throw FormatError("group size does not divide d_in", 16);
    if (books == 0) throw FormatError("codebook count is zero", 20);
    if (bits < 1 || bits > 16) throw FormatError("code bits out of range", 22);
    if (reserved != 0) throw FormatError("reserved header byte is not zero", 23);

    QuantConfig cfg;
    cfg.group_size = group;
    cfg.num_codebooks = books;
    cfg.code_bits = bits;
    const std::size_t k = cfg.codebook_size();
    const std::size_t n_codes = std::size_t(d_out) * (d_in / group) * books;
    const std::size_t expected =
        kAqlmHeaderSize + 4 * (std::size_t(books) * k * group + d_out) + packed_code_bytes(n_codes, bits);
    if (bytes.size() < expected)
        throw FormatError("truncated stream, expected " + std::to_string(expected) + " bytes", bytes.size());
    if (bytes.size() > expected) throw FormatError("trailing bytes after layer payload", expected);

    QuantizedLayer<float> layer(cfg, d_out, d_in);
    for (auto& cb : layer.codebooks)
        for (auto& v : cb.data) {
            const std::size_t at = r.offset();
            v = r.f32("codebook entry");
            if (!std::isfinite(v)) throw FormatError("non-finite codebook entry", at);
        }
    for (auto& s : layer.scales) {
        const std::size_t at = r.offset();
        s = r.f32("scale");
        if (!std::isfinite(s) || !(s > 0.0f)) throw FormatError("scale must be finite and positive", at);
    }
    const std::size_t codes_at = r.offset();
    auto packed = r.take(packed_code_bytes(n_codes, bits), "codes");
    layer.codes.data = unpack_codes(packed, n_codes, bits, codes_at);
    return layer;
}

inline void save_layer(const std::string& path, const QuantizedLayer<float>& layer) {
    detail::write_file(path, serialize(layer));
}

inline QuantizedLayer<float> load_layer(const std::string& path) { return deserialize(detail::read_file(path)); }

enum class DType : std::uint32_t { f32 = 0, f64 = 1 };

inline std::vector<std::uint8_t> encode_dten(const Matrix& m, DType dtype = DType::f32, bool as_vector = false) {
    detail::ByteWriter w;
    w.tag("DTEN");
    w.u32(static_cast<std::uint32_t>(dtype));
    if (as_vector) {
        w.u32(1);
        w.u64(m.size());
    } else {
        w.u32(2);
        w.u64(m.rows());
        w.u64(m.cols());
    }
    for (double v : m.values()) {
        if (dtype == DType::f32)
            w.f32(static_cast<float>(v));
        else
            w.f64(v);
    }
    return std::move(w.bytes());
}

// A 1-d tensor of length n decodes as an n x 1 matrix.
inline Matrix decode_dten(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("DTEN");
    const auto dtype = r.u32("dtype");
    if (dtype > 1) throw FormatError("unknown dtype tag " + std::to_string(dtype), 4);
    const auto ndim = r.u32("ndim");
    if (ndim < 1 || ndim > 2) throw FormatError("only 1-d and 2-d tensors are supported", 8);
    const std::uint64_t rows = r.u64("dims");
    const std::uint64_t cols = ndim == 2 ? r.u64("dims") : 1;
    const std::size_t width = dtype == 0 ? 4 : 8;
    if (rows == 0 || cols == 0) throw FormatError("zero-sized dimension", 12);
    if (rows > (std::uint64_t(1) << 32) || cols > (std::uint64_t(1) << 32))
        throw FormatError("dimension too large", 12);
    const std::size_t count = std::size_t(rows) * std::size_t(cols);
    if (r.remaining() < count * width)
        throw FormatError("truncated tensor payload, expected " + std::to_string(count * width) + " bytes",
                          bytes.size());
    if (r.remaining() > count * width) throw FormatError("trailing bytes after tensor", r.offset() + count * width);
    std::vector<double> values(count);
    for (auto& v : values) {
        const std::size_t at = r.offset();
        v = dtype == 0 ? double(r.f32("value")) : r.f64("value");
        if (!std::isfinite(v)) throw FormatError("non-finite tensor value", at);
    }
    return Matrix(rows, cols, std::move(values));
}

inline void save_dten(const std::string& path, const Matrix& m, DType dtype = DType::f32, bool as_vector = false) {
    detail::write_file(path, encode_dten(m, dtype, as_vector));
}

// Plain-text fixture: "rows cols" followed by rows*cols whitespace-separated values.
inline Matrix parse_text_matrix(std::istream& in) {
    std::size_t rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows == 0 || cols == 0)
        throw FormatError("text matrix: expected positive \"rows cols\" header", 0);
    std::vector<double> values(rows * cols);
    for (std::size_t n = 0; n < values.size(); ++n) {
        if (!(in >> values[n]))
            throw FormatError("text matrix: expected " + std::to_string(values.size()) + " values, got " +
                                  std::to_string(n),
                              static_cast<std::size_t>(std::max<std::streamoff>(0, in.tellg())));
        if (!std::isfinite(values[n])) throw FormatError("text matrix: non-finite value", 0);
    }
    std::string extra;
    if (in >> extra) throw FormatError("text matrix: trailing data \"" + extra + "\"", 0);
    return Matrix(rows, cols, std::move(values));
}

// Reads DTEN when the file starts with the magic, otherwise the plain-text form.
inline Matrix load_matrix(const std::string& path) {
    auto bytes = detail::read_file(path);
    if (bytes.size() >= 4 && bytes[0] == 'D' && bytes[1] == 'T' && bytes[2] == 'E' && bytes[3] == 'N')
        return decode_dten(bytes);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    return parse_text_matrix(in);
}

}  // namespace aqlm
