#include "rdcl/entropy/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rdcl/core/error.hpp"

namespace rdcl::entropy {

namespace {

constexpr std::uint64_t kTop = std::uint64_t{1} << 56;
constexpr std::uint64_t kBot = std::uint64_t{1} << 48;
constexpr int kEscapeLengthBits = 5;
constexpr int kMaxEscapeLength = 23;

int bit_length(std::uint32_t v) {
    int n = 0;
    while (v >>= 1) ++n;
    return n;
}

}  // namespace

void RangeEncoder::encode_range(std::uint32_t cum, std::uint32_t freq, int precision) {
    used_ = true;
    const std::uint64_t r = range_ >> precision;
    low_ += r * cum;
    range_ = r * freq;
    while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0 - low_) & (kBot - 1)), true))) {
        out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
        low_ <<= 8;
        range_ <<= 8;
    }
}

void RangeEncoder::encode_bits(std::uint32_t value, int bits) {
    if (bits == 0) return;
    encode_range(value & ((1u << bits) - 1), 1, bits);
}

void RangeEncoder::encode(std::int32_t symbol, const CdfTable& table) {
    const std::int64_t s = symbol;
    int bin;
    std::int64_t overflow = -1;
    if (s < table.min_symbol()) {
        bin = 0;
        overflow = static_cast<std::int64_t>(table.min_symbol()) - 1 - s;
    } else if (s > table.max_symbol()) {
        bin = table.bins() - 1;
        overflow = s - table.max_symbol() - 1;
    } else {
        bin = static_cast<int>(s - table.offset) + 1;
    }
    if (overflow > static_cast<std::int64_t>(kMaxEscapeOverflow))
        throw EncodeError("range_encode: symbol " + std::to_string(symbol) + " is beyond the escape range");
    encode_range(table.cdf[bin], table.count(bin), table.precision);
    if (overflow >= 0) {
        const auto v = static_cast<std::uint32_t>(overflow + 1);
        const int n = bit_length(v);
        encode_bits(static_cast<std::uint32_t>(n), kEscapeLengthBits);
        if (n > 16) {
            encode_bits(v >> 16, n - 16);
            encode_bits(v & 0xFFFFu, 16);
        } else {
            encode_bits(v, n);
        }
    }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    if (used_) {
        // Pick the value in [low, low + range) with the most trailing zero
        // bytes; the decoder pads with zeros.
        int bytes = 8;
        std::uint64_t value = low_;
        if (low_ == 0) {
            bytes = 0;
        } else {
            for (int n = 1; n < 8; ++n) {
                const std::uint64_t mask = (std::uint64_t{1} << (64 - 8 * n)) - 1;
                if (low_ + mask < low_) continue;
                const std::uint64_t v = (low_ + mask) & ~mask;
                if (v - low_ < range_) {
                    bytes = n;
                    value = v;
                    break;
                }
            }
        }
        for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(value >> (56 - 8 * i)));
    }
    std::vector<std::uint8_t> out = std::move(out_);
    out_.clear();
    low_ = 0;
    range_ = ~std::uint64_t{0};
    used_ = false;
    return out;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
    for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ < in_.size()) return in_[pos_++];
    ++pos_;
    if (pos_ > in_.size() + 8)
        throw DecodeError(DecodeError::Kind::Corrupt, "range_decode: read past the end of the segment", in_.size());
    return 0;
}

std::uint32_t RangeDecoder::decode_target(int precision) {
    step_ = range_ >> precision;
    const std::uint64_t v = (code_ - low_) / step_;
    if (v >> precision)
        throw DecodeError(DecodeError::Kind::Corrupt,
                          "range_decode: code value outside the interval at byte " + std::to_string(pos_), pos_);
    return static_cast<std::uint32_t>(v);
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
    low_ += step_ * cum;
    range_ = step_ * freq;
    while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0 - low_) & (kBot - 1)), true))) {
        code_ = (code_ << 8) | next_byte();
        low_ <<= 8;
        range_ <<= 8;
    }
}

std::uint32_t RangeDecoder::decode_bits(int bits) {
    if (bits == 0) return 0;
    const std::uint32_t v = decode_target(bits);
    consume(v, 1);
    return v;
}

std::int32_t RangeDecoder::decode(const CdfTable& table) {
    const std::uint32_t target = decode_target(table.precision);
    const auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), target);
    const int bin = static_cast<int>(it - table.cdf.begin()) - 1;
    consume(table.cdf[bin], table.count(bin));
    if (bin != 0 && bin != table.bins() - 1) return table.offset + bin - 1;

    const std::size_t at = pos_;
    const int n = static_cast<int>(decode_bits(kEscapeLengthBits));
    if (n > kMaxEscapeLength)
        throw DecodeError(DecodeError::Kind::Corrupt, "range_decode: bad escape length at byte " + std::to_string(at), at);
    std::uint32_t v;
    if (n > 16) {
        const std::uint32_t hi = decode_bits(n - 16);
        v = (1u << n) | (hi << 16) | decode_bits(16);
    } else {
        v = (1u << n) | decode_bits(n);
    }
    const std::int64_t overflow = static_cast<std::int64_t>(v) - 1;
    if (overflow > static_cast<std::int64_t>(kMaxEscapeOverflow))
        throw DecodeError(DecodeError::Kind::Corrupt, "range_decode: escape overflow at byte " + std::to_string(at), at);
    const std::int64_t s = bin == 0 ? static_cast<std::int64_t>(table.min_symbol()) - 1 - overflow
                                    : static_cast<std::int64_t>(table.max_symbol()) + 1 + overflow;
    return static_cast<std::int32_t>(s);
}

std::vector<std::uint8_t> range_encode(std::span<const std::int32_t> symbols,
                                       std::span<const CdfTable* const> tables) {
    if (symbols.size() != tables.size()) throw ContractError("range_encode: one table per symbol required");
    RangeEncoder enc;
    for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], *tables[i]);
    return enc.finish();
}

std::vector<std::int32_t> range_decode(std::span<const std::uint8_t> bytes,
                                       std::span<const CdfTable* const> tables) {
    std::vector<std::int32_t> out;
    out.reserve(tables.size());
    if (tables.empty()) return out;
    RangeDecoder dec(bytes);
    for (const CdfTable* t : tables) out.push_back(dec.decode(*t));
    return out;
}

double table_code_length_bits(std::span<const std::int32_t> symbols, std::span<const CdfTable* const> tables) {
    if (symbols.size() != tables.size()) throw ContractError("table_code_length_bits: one table per symbol required");
    double bits = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        const CdfTable& t = *tables[i];
        const std::int64_t s = symbols[i];
        int bin;
        std::int64_t overflow = -1;
        if (s < t.min_symbol()) {
            bin = 0;
            overflow = static_cast<std::int64_t>(t.min_symbol()) - 1 - s;
        } else if (s > t.max_symbol()) {
            bin = t.bins() - 1;
            overflow = s - t.max_symbol() - 1;
        } else {
            bin = static_cast<int>(s - t.offset) + 1;
        }
        bits += static_cast<double>(t.precision) - std::log2(static_cast<double>(t.count(bin)));
        if (overflow >= 0) bits += kEscapeLengthBits + bit_length(static_cast<std::uint32_t>(overflow + 1));
    }
    return bits;
}

}  // namespace rdcl::entropy
