#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cartoonqa {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

// Throws std::invalid_argument on non-base64 input or bad padding.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace cartoonqa
