#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eatta {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws IoError on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// 8-bit grayscale PNG (single IDAT, zlib-compressed).
std::vector<std::uint8_t> encode_png_gray(int width, int height, std::span<const std::uint8_t> pixels);

}  // namespace eatta
