// Copyright (c) 2026, The demoalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "demoalign/serialization.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "demoalign/error.h"

namespace demoalign {

void ByteWriter::header(const std::array<char, 8>& magic, std::uint32_t version) {
    for (char c : magic) {
        u8(static_cast<std::uint8_t>(c));
    }
    u32(version);
    u32(0);
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteWriter::tokens(const TokenSeq& seq) {
    u32(static_cast<std::uint32_t>(seq.size()));
    for (TokenId t : seq) {
        i32(t);
    }
}

void ByteWriter::write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) {
        fail(ErrorCode::IoError, "failed writing " + path.string());
    }
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(bytes));
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
    if (buf_.size() - pos_ < n) {
        fail(ErrorCode::ParseError, "truncated container at byte " + std::to_string(pos_));
    }
    std::span<const std::uint8_t> out(buf_.data() + pos_, n);
    pos_ += n;
    return out;
}

void ByteReader::expect_header(const std::array<char, 8>& magic, std::uint32_t version) {
    if (buf_.size() < 16) {
        fail(ErrorCode::VersionMismatch, "container shorter than its 16-byte header");
    }
    if (std::memcmp(buf_.data(), magic.data(), magic.size()) != 0) {
        fail(ErrorCode::VersionMismatch, "unrecognized container magic");
    }
    pos_ = 8;
    const std::uint32_t found = u32();
    const std::uint32_t reserved = u32();
    if (found != version || reserved != 0) {
        fail(ErrorCode::VersionMismatch,
             "container version " + std::to_string(found) + ", expected " + std::to_string(version));
    }
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint32_t ByteReader::u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    }
    return v;
}

std::int32_t ByteReader::i32() { return static_cast<std::int32_t>(u32()); }

std::uint64_t ByteReader::u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    }
    return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
    const std::uint32_t n = u32();
    auto b = take(n);
    return std::string(b.begin(), b.end());
}

TokenSeq ByteReader::tokens() {
    const std::uint32_t n = u32();
    if (n > (buf_.size() - pos_) / 4) {
        fail(ErrorCode::ParseError, "token sequence length exceeds container");
    }
    TokenSeq seq(n);
    for (auto& t : seq) {
        t = i32();
    }
    return seq;
}

namespace {

void write_tag(ByteWriter& out, const SourceTag& tag) {
    out.u8(static_cast<std::uint8_t>(tag.kind));
    out.i32(tag.iteration.value_or(-1));
}

SourceTag read_tag(ByteReader& in) {
    const std::uint8_t kind = in.u8();
    const std::int32_t iteration = in.i32();
    if (kind == static_cast<std::uint8_t>(SourceKind::Expert)) {
        return SourceTag::expert();
    }
    if (kind == static_cast<std::uint8_t>(SourceKind::Checkpoint)) {
        return SourceTag::checkpoint(iteration);
    }
    fail(ErrorCode::ParseError, "unknown source kind " + std::to_string(kind));
}

void write_completion(ByteWriter& out, const Completion& c) {
    out.tokens(c.tokens);
    out.u8(c.terminated ? 1 : 0);
}

Completion read_completion(ByteReader& in) {
    Completion c;
    c.tokens = in.tokens();
    c.terminated = in.u8() != 0;
    return c;
}

}  // namespace

void write_triple(ByteWriter& out, const ComparisonTriple& triple) {
    out.i32(triple.prompt.id);
    out.tokens(triple.prompt.tokens);
    write_completion(out, triple.winner);
    write_completion(out, triple.loser);
    write_tag(out, triple.winner_source);
    write_tag(out, triple.loser_source);
    out.u8(static_cast<std::uint8_t>(triple.category));
}

ComparisonTriple read_triple(ByteReader& in) {
    ComparisonTriple t;
    t.prompt.id = in.i32();
    t.prompt.tokens = in.tokens();
    t.winner = read_completion(in);
    t.loser = read_completion(in);
    t.winner_source = read_tag(in);
    t.loser_source = read_tag(in);
    const std::uint8_t category = in.u8();
    if (category > static_cast<std::uint8_t>(PairCategory::Annotated)) {
        fail(ErrorCode::ParseError, "unknown pair category " + std::to_string(category));
    }
    t.category = static_cast<PairCategory>(category);
    return t;
}

void save_dataset(std::span<const ComparisonTriple> comparisons, const std::filesystem::path& path) {
    ByteWriter out;
    out.header(kDatasetMagic);
    out.u64(comparisons.size());
    for (const auto& t : comparisons) {
        write_triple(out, t);
    }
    out.write_file(path);
}

std::vector<ComparisonTriple> load_dataset(const std::filesystem::path& path) {
    ByteReader in = ByteReader::from_file(path);
    in.expect_header(kDatasetMagic);
    const std::uint64_t count = in.u64();
    std::vector<ComparisonTriple> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        out.push_back(read_triple(in));
    }
    if (!in.at_end()) {
        fail(ErrorCode::ParseError, "trailing bytes after dataset records");
    }
    return out;
}

}  // namespace demoalign
