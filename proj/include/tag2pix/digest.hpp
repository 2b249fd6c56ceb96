#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tag2pix {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Returns nullopt on malformed input. Whitespace is not tolerated.
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text);

}  // namespace tag2pix
