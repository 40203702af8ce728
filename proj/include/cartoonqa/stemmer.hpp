#pragma once

#include <string>

namespace cartoonqa {

// Porter (1980) suffix-stripping stemmer. Input is expected lowercase;
// non-alphabetic tokens are returned unchanged.
std::string porter_stem(const std::string& word);

}  // namespace cartoonqa
