#include "rdcl/entropy/bitstream.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "rdcl/core/error.hpp"

namespace rdcl::entropy {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> Bitstream::serialize() const {
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(version);
    out.push_back(model_id);
    put_u32(out, std::bit_cast<std::uint32_t>(gain));
    put_u32(out, width);
    put_u32(out, height);
    for (const auto& seg : segments) {
        put_u32(out, static_cast<std::uint32_t>(seg.size()));
        out.insert(out.end(), seg.begin(), seg.end());
    }
    return out;
}

Bitstream Bitstream::parse(std::span<const std::uint8_t> bytes, std::optional<std::uint8_t> expected_model_id) {
    using Kind = DecodeError::Kind;
    if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
        throw DecodeError(Kind::BadMagic, "bad magic: not an RDCL stream", 0);
    if (bytes.size() < kHeaderBytes) throw DecodeError(Kind::Truncated, "truncated header", bytes.size());
    Bitstream bs;
    bs.version = bytes[4];
    if (bs.version != kBitstreamVersion)
        throw DecodeError(Kind::BadVersion, "unsupported stream version " + std::to_string(bs.version), 4);
    bs.model_id = bytes[5];
    if (expected_model_id && *expected_model_id != bs.model_id)
        throw DecodeError(Kind::ModelMismatch,
                          "model id mismatch: stream " + std::to_string(bs.model_id) + ", checkpoint " +
                              std::to_string(*expected_model_id),
                          5);
    bs.gain = std::bit_cast<float>(get_u32(bytes, 6));
    bs.width = get_u32(bytes, 10);
    bs.height = get_u32(bytes, 14);
    std::size_t at = kHeaderBytes;
    while (at < bytes.size()) {
        if (bytes.size() - at < 4)
            throw DecodeError(Kind::Truncated,
                              "truncated length prefix of segment " + std::to_string(bs.segments.size()), at);
        const std::uint32_t len = get_u32(bytes, at);
        at += 4;
        if (bytes.size() - at < len)
            throw DecodeError(Kind::Truncated, "truncated segment " + std::to_string(bs.segments.size()), at);
        bs.segments.emplace_back(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(at + len));
        at += len;
    }
    return bs;
}

std::size_t Bitstream::payload_bytes() const {
    std::size_t n = 0;
    for (const auto& seg : segments) n += 4 + seg.size();
    return n;
}

}  // namespace rdcl::entropy
