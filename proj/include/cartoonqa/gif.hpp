#pragma once

#include <cstdint>
#include <vector>

namespace cartoonqa {

// One composited frame: a full-canvas RGBA snapshot taken after the
// frame's image data has been drawn (GIF frames may be partial updates).
struct GifFrame {
    std::vector<std::uint8_t> rgba;  // width*height*4
};

struct GifImage {
    int width{0};
    int height{0};
    std::vector<GifFrame> frames;
};

// Decodes GIF87a/GIF89a, including interlacing, transparency and frame
// disposal. Throws std::runtime_error on malformed input.
GifImage decode_gif(const std::vector<std::uint8_t>& bytes);

}  // namespace cartoonqa
