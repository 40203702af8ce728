#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cartoonqa {

// Encodes an 8-bit RGBA buffer (width*height*4 bytes) as a PNG.
std::vector<std::uint8_t> encode_png_rgba(int width, int height,
                                          const std::vector<std::uint8_t>& rgba);

// Returns "png", "jpeg" or "gif" from the payload's magic bytes, or nullopt
// for anything unrecognised.
std::optional<std::string> sniff_image_format(const std::vector<std::uint8_t>& bytes);

}  // namespace cartoonqa
