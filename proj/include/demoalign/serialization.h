// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container. Every file starts with a 16-byte header:
//   bytes 0..7   magic ("DALNDSET" for datasets, "DALNCKPT" for checkpoints)
//   bytes 8..11  format version, uint32 little-endian
//   bytes 12..15 reserved, zero
// All integers are little-endian; reals are IEEE-754 binary64 little-endian.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "demoalign/core.h"

namespace demoalign {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::array<char, 8> kDatasetMagic = {'D', 'A', 'L', 'N', 'D', 'S', 'E', 'T'};
inline constexpr std::array<char, 8> kCheckpointMagic = {'D', 'A', 'L', 'N', 'C', 'K', 'P', 'T'};

class ByteWriter {
public:
    void header(const std::array<char, 8>& magic, std::uint32_t version = kFormatVersion);
    void u8(std::uint8_t v);
    void u32(std::uint32_t v);
    void i32(std::int32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void str(std::string_view s);
    void tokens(const TokenSeq& seq);

    const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
    void write_file(const std::filesystem::path& path) const;

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}
    static ByteReader from_file(const std::filesystem::path& path);

    /// Throws VersionMismatch unless the header matches exactly.
    void expect_header(const std::array<char, 8>& magic, std::uint32_t version = kFormatVersion);
    std::uint8_t u8();
    std::uint32_t u32();
    std::int32_t i32();
    std::uint64_t u64();
    double f64();
    std::string str();
    TokenSeq tokens();

    bool at_end() const noexcept { return pos_ == buf_.size(); }

private:
    std::span<const std::uint8_t> take(std::size_t n);

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

void write_triple(ByteWriter& out, const ComparisonTriple& triple);
ComparisonTriple read_triple(ByteReader& in);

void save_dataset(std::span<const ComparisonTriple> comparisons, const std::filesystem::path& path);
std::vector<ComparisonTriple> load_dataset(const std::filesystem::path& path);

}  // namespace demoalign
