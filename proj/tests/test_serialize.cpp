#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "common.hpp"

using namespace aqlm;

namespace {

QuantConfig cfg(std::size_t g, std::size_t m, std::size_t b) {
    QuantConfig c;
    c.group_size = g;
    c.num_codebooks = m;
    c.code_bits = b;
    return c;
}

std::size_t offset_of(const std::vector<std::uint8_t>& bytes) {
    try {
        deserialize(bytes);
    } catch (const FormatError& e) {
        return e.offset();
    }
    return std::size_t(-1);
}

}  // namespace

TEST(PackCodes, ByteAlignedEightBits) {
    const std::vector<std::uint16_t> codes{0x12, 0x34};
    EXPECT_EQ(pack_codes(codes, 8), (std::vector<std::uint8_t>{0x12, 0x34}));
}

TEST(PackCodes, ThreeBitGolden) {
    // 5 = 101, 1 = 001, 7 = 111, least significant bit first:
    // stream bits 1 0 1 | 1 0 0 | 1 1 1 -> byte0 = 0b11001101, byte1 = 0b00000001.
    const std::vector<std::uint16_t> codes{5, 1, 7};
    const std::vector<std::uint8_t> golden{0xCD, 0x01};
    EXPECT_EQ(pack_codes(codes, 3), golden);
    EXPECT_EQ(unpack_codes(golden, 3, 3), codes);
}

TEST(PackCodes, RoundTripAllWidths) {
    std::mt19937_64 rng(5);
    for (std::size_t bits = 1; bits <= 16; ++bits) {
        std::uniform_int_distribution<std::uint32_t> d(0, (1u << bits) - 1);
        std::vector<std::uint16_t> codes(37);
        for (auto& c : codes) c = static_cast<std::uint16_t>(d(rng));
        const auto packed = pack_codes(codes, bits);
        EXPECT_EQ(packed.size(), (37 * bits + 7) / 8);
        EXPECT_EQ(unpack_codes(packed, codes.size(), bits), codes);
    }
}

TEST(PackCodes, OutOfRangeAndPadding) {
    const std::vector<std::uint16_t> codes{8};
    EXPECT_THROW(pack_codes(codes, 3), InvalidInput);
    const std::vector<std::uint8_t> dirty{0xCD, 0x03};
    EXPECT_THROW(unpack_codes(dirty, 3, 3), FormatError);
}

TEST(Serialize, RoundTripIsIdentity) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const std::size_t b = 1 + seed * 2;
        const auto layer = testutil::random_layer<float>(cfg(4, 1 + seed % 3, b), 5, 12, seed);
        const auto bytes = serialize(layer);
        const auto back = deserialize(bytes);
        EXPECT_EQ(back, layer);
        EXPECT_EQ(serialize(back), bytes);
    }
}

TEST(Serialize, HeaderLayout) {
    const auto layer = testutil::random_layer<float>(cfg(4, 2, 3), 2, 8, 1);
    const auto bytes = serialize(layer);
    ASSERT_GE(bytes.size(), kAqlmHeaderSize);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "AQL1");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 2);
    EXPECT_EQ(bytes[12], 8);
    EXPECT_EQ(bytes[16], 4);
    EXPECT_EQ(bytes[20], 2);
    EXPECT_EQ(bytes[22], 3);
    const std::size_t k = 8, g = 4, M = 2, d_out = 2, groups = 2;
    EXPECT_EQ(bytes.size(), kAqlmHeaderSize + 4 * (M * k * g + d_out) + (d_out * groups * M * 3 + 7) / 8);
}

TEST(Serialize, RejectsEverySingleByteHeaderCorruption) {
    const auto layer = testutil::random_layer<float>(cfg(4, 2, 3), 3, 8, 4);
    const auto bytes = serialize(layer);
    for (std::size_t pos = 0; pos < kAqlmHeaderSize; ++pos)
        for (int v = 0; v < 256; ++v) {
            if (v == bytes[pos]) continue;
            auto bad = bytes;
            bad[pos] = static_cast<std::uint8_t>(v);
            EXPECT_THROW(deserialize(bad), FormatError) << "byte " << pos << " value " << v;
        }
}

TEST(Serialize, ErrorOffsets) {
    const auto layer = testutil::random_layer<float>(cfg(4, 2, 3), 3, 8, 4);
    const auto bytes = serialize(layer);

    auto bad_magic = bytes;
    bad_magic[1] = 'X';
    EXPECT_EQ(offset_of(bad_magic), 1u);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_EQ(offset_of(truncated), truncated.size());

    std::vector<std::uint8_t> tiny(bytes.begin(), bytes.begin() + 10);
    EXPECT_EQ(offset_of(tiny), 10u);

    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_EQ(offset_of(trailing), bytes.size());

    auto bad_scale = bytes;
    const std::size_t scale_at = kAqlmHeaderSize + 4 * (2 * 8 * 4);
    for (int t = 0; t < 4; ++t) bad_scale[scale_at + t] = 0;  // +0.0f
    EXPECT_EQ(offset_of(bad_scale), scale_at);

    auto bad_codebook = bytes;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bad_codebook.data() + kAqlmHeaderSize + 8, &nan, 4);
    EXPECT_EQ(offset_of(bad_codebook), kAqlmHeaderSize + 8);
}

TEST(Serialize, NonZeroPaddingRejected) {
    // 3 rows * 2 groups * 2 books * 3 bits = 36 bits -> 4 padding bits in the last byte.
    const auto layer = testutil::random_layer<float>(cfg(4, 2, 3), 3, 8, 4);
    auto bytes = serialize(layer);
    bytes.back() |= 0x80;
    EXPECT_EQ(offset_of(bytes), bytes.size() - 1);
}

TEST(Serialize, HalfPrecisionTagIsReserved) {
    const auto layer = testutil::random_layer<float>(cfg(4, 1, 2), 2, 8, 4);
    auto bytes = serialize(layer);
    bytes[6] = 1;
    const auto crc = detail::crc32_of(std::span<const std::uint8_t>(bytes.data(), 24));
    for (int t = 0; t < 4; ++t) bytes[24 + t] = static_cast<std::uint8_t>(crc >> (8 * t));
    EXPECT_EQ(offset_of(bytes), 6u);
}

TEST(Serialize, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "aqlm_test_layer.aqlm";
    const auto layer = testutil::random_layer<float>(cfg(8, 2, 5), 4, 16, 9);
    save_layer(path.string(), layer);
    EXPECT_EQ(load_layer(path.string()), layer);
    std::filesystem::remove(path);
}

TEST(Dten, RoundTripBothDtypes) {
    const auto m = testutil::gaussian(3, 5, 2);
    EXPECT_EQ(decode_dten(encode_dten(m, DType::f64)), m);
    const auto f = decode_dten(encode_dten(m, DType::f32));
    for (std::size_t q = 0; q < m.size(); ++q) EXPECT_EQ(f.values()[q], double(float(m.values()[q])));
}

TEST(Dten, VectorLoadsAsColumn) {
    const Matrix v(4, 1, {1, 2, 3, 4});
    const auto back = decode_dten(encode_dten(v, DType::f32, true));
    EXPECT_EQ(back, v);
}

TEST(Dten, MalformedInputsCarryOffsets) {
    const auto bytes = encode_dten(Matrix(2, 2, {1, 2, 3, 4}), DType::f32);
    auto bad = bytes;
    bad[4] = 7;
    try {
        decode_dten(bad);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
    auto cut = bytes;
    cut.pop_back();
    EXPECT_THROW(decode_dten(cut), FormatError);
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_THROW(decode_dten(extra), FormatError);
}

TEST(TextMatrix, ParsesAndRejects) {
    std::istringstream ok("2 3\n1 2 3\n4 5 6\n");
    EXPECT_EQ(parse_text_matrix(ok), Matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    std::istringstream short_in("2 2 1 2 3");
    EXPECT_THROW(parse_text_matrix(short_in), FormatError);
    std::istringstream extra("1 1 1 2");
    EXPECT_THROW(parse_text_matrix(extra), FormatError);
    std::istringstream header("x y");
    EXPECT_THROW(parse_text_matrix(header), FormatError);
}
