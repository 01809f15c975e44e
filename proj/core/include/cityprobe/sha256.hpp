#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace cityprobe {

std::array<uint8_t, 32> sha256(std::string_view data);

/// Lowercase 64-character hex digest.
std::string sha256_hex(std::string_view data);

}  // namespace cityprobe
