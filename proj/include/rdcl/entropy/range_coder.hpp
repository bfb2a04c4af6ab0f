#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rdcl/entropy/cdf_table.hpp"

namespace rdcl::entropy {

/// Byte-oriented range encoder with carry-less renormalisation on a 64-bit
/// interval. Symbols are coded against CdfTable contexts; values outside a
/// table's regular range go through its escape bins.
class RangeEncoder {
public:
    void encode(std::int32_t symbol, const CdfTable& table);
    /// Codes `bits` raw bits (<= 16) at equal probability.
    void encode_bits(std::uint32_t value, int bits);
    /// Flushes the interval with the fewest bytes that identify it.
    std::vector<std::uint8_t> finish();

private:
    void encode_range(std::uint32_t cum, std::uint32_t freq, int precision);

    std::uint64_t low_ = 0;
    std::uint64_t range_ = ~std::uint64_t{0};
    std::vector<std::uint8_t> out_;
    bool used_ = false;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const std::uint8_t> bytes);

    std::int32_t decode(const CdfTable& table);
    std::uint32_t decode_bits(int bits);

    /// Bytes consumed so far (including the implicit zero padding).
    std::size_t position() const { return pos_; }

private:
    std::uint32_t decode_target(int precision);
    void consume(std::uint32_t cum, std::uint32_t freq);
    std::uint8_t next_byte();

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    std::uint64_t low_ = 0;
    std::uint64_t range_ = ~std::uint64_t{0};
    std::uint64_t code_ = 0;
    std::uint64_t step_ = 0;
};

/// Codes symbols[i] under *tables[i].
std::vector<std::uint8_t> range_encode(std::span<const std::int32_t> symbols,
                                       std::span<const CdfTable* const> tables);
std::vector<std::int32_t> range_decode(std::span<const std::uint8_t> bytes,
                                       std::span<const CdfTable* const> tables);

/// Ideal code length of symbols under the tables' own quantised
/// probabilities, escapes included.
double table_code_length_bits(std::span<const std::int32_t> symbols, std::span<const CdfTable* const> tables);

}  // namespace rdcl::entropy
