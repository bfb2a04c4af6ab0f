#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace rdcl::entropy {

inline constexpr std::array<std::uint8_t, 4> kMagic{'R', 'D', 'C', 'L'};
inline constexpr std::uint8_t kBitstreamVersion = 1;
inline constexpr std::size_t kHeaderBytes = 18;

/// On-disk compressed image. Little-endian throughout:
///
///   magic "RDCL" | version u8 | model_id u8 | gain f32 | width u32 | height u32
///   then per segment: length u32 | bytes
///
/// Segment 0 carries z; the rest carry y coding units in schedule order.
struct Bitstream {
    std::uint8_t version = kBitstreamVersion;
    std::uint8_t model_id = 0;
    float gain = 1.0f;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::vector<std::uint8_t>> segments;

    std::vector<std::uint8_t> serialize() const;

    /// Parses and checks magic, version and (if given) the model id.
    /// Throws DecodeError with a distinct kind for each failure.
    static Bitstream parse(std::span<const std::uint8_t> bytes,
                           std::optional<std::uint8_t> expected_model_id = std::nullopt);

    /// Everything after the fixed header.
    std::size_t payload_bytes() const;
    std::size_t total_bytes() const { return kHeaderBytes + payload_bytes(); }
};

}  // namespace rdcl::entropy
