#include "cartoonqa/gif.hpp"

#include <array>
#include <cstring>
#include <stdexcept>
#include <string>

namespace cartoonqa {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("gif: " + msg); }

class ByteReader {
  public:
    explicit ByteReader(const std::vector<std::uint8_t>& data) : data_(data) {}

    std::uint8_t u8() {
        if (pos_ >= data_.size()) fail("unexpected end of data");
        return data_[pos_++];
    }

    std::uint16_t u16le() {
        const std::uint16_t lo = u8();
        const std::uint16_t hi = u8();
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }

    void read(std::uint8_t* out, std::size_t n) {
        if (pos_ + n > data_.size()) fail("unexpected end of data");
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }

    void skip(std::size_t n) {
        if (pos_ + n > data_.size()) fail("unexpected end of data");
        pos_ += n;
    }

  private:
    const std::vector<std::uint8_t>& data_;
    std::size_t pos_{0};
};

struct ColorTable {
    std::array<std::array<std::uint8_t, 3>, 256> rgb{};
    int size{0};
};

ColorTable read_color_table(ByteReader& r, int size) {
    ColorTable t;
    t.size = size;
    for (int i = 0; i < size; ++i) r.read(t.rgb[i].data(), 3);
    return t;
}

// Data sub-blocks concatenated into one buffer.
std::vector<std::uint8_t> read_sub_blocks(ByteReader& r) {
    std::vector<std::uint8_t> out;
    for (;;) {
        const std::uint8_t len = r.u8();
        if (len == 0) break;
        const std::size_t old = out.size();
        out.resize(old + len);
        r.read(out.data() + old, len);
    }
    return out;
}

void skip_sub_blocks(ByteReader& r) {
    for (;;) {
        const std::uint8_t len = r.u8();
        if (len == 0) break;
        r.skip(len);
    }
}

// GIF-flavoured LZW: codes are read LSB-first, code width grows up to 12
// bits, the clear code resets the dictionary.
std::vector<std::uint8_t> lzw_decode(const std::vector<std::uint8_t>& data, int min_code_size,
                                     std::size_t expected_pixels) {
    if (min_code_size < 1 || min_code_size > 11) fail("bad LZW minimum code size");
    const int clear_code = 1 << min_code_size;
    const int eoi_code = clear_code + 1;

    // dictionary entries stored as (prefix code, appended byte)
    std::array<int, 4096> prefix{};
    std::array<std::uint8_t, 4096> append{};
    int next_code = eoi_code + 1;
    int code_size = min_code_size + 1;

    std::vector<std::uint8_t> out;
    out.reserve(expected_pixels);

    std::uint32_t bit_buf = 0;
    int bit_count = 0;
    std::size_t pos = 0;
    int prev = -1;

    std::vector<std::uint8_t> entry;  // reversed expansion scratch
    auto expand = [&](int code) {
        entry.clear();
        while (code >= clear_code) {
            if (entry.size() > 4096) fail("corrupt LZW chain");
            entry.push_back(append[code]);
            code = prefix[code];
        }
        entry.push_back(static_cast<std::uint8_t>(code));
        out.insert(out.end(), entry.rbegin(), entry.rend());
        return static_cast<std::uint8_t>(code);  // first byte of the expansion
    };

    for (;;) {
        while (bit_count < code_size) {
            if (pos >= data.size()) return out;  // tolerate missing EOI
            bit_buf |= static_cast<std::uint32_t>(data[pos++]) << bit_count;
            bit_count += 8;
        }
        const int code = static_cast<int>(bit_buf & ((1u << code_size) - 1));
        bit_buf >>= code_size;
        bit_count -= code_size;

        if (code == clear_code) {
            next_code = eoi_code + 1;
            code_size = min_code_size + 1;
            prev = -1;
            continue;
        }
        if (code == eoi_code) break;

        if (prev < 0) {
            if (code >= clear_code) fail("first code must be a literal");
            out.push_back(static_cast<std::uint8_t>(code));
            prev = code;
            continue;
        }

        std::uint8_t first;
        if (code < next_code) {
            first = expand(code);
        } else if (code == next_code) {
            // KwKwK case: expansion of prev followed by its own first byte
            first = expand(prev);
            out.push_back(first);
        } else {
            fail("LZW code out of range");
        }

        if (next_code < 4096) {
            prefix[next_code] = prev;
            append[next_code] = first;
            ++next_code;
            if (next_code == (1 << code_size) && code_size < 12) ++code_size;
        }
        prev = code;

        if (out.size() >= expected_pixels) break;
    }
    return out;
}

constexpr std::array<int, 4> kInterlaceStart = {0, 4, 2, 1};
constexpr std::array<int, 4> kInterlaceStep = {8, 8, 4, 2};

}  // namespace

GifImage decode_gif(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 6 ||
        (std::memcmp(bytes.data(), "GIF89a", 6) != 0 && std::memcmp(bytes.data(), "GIF87a", 6) != 0))
        fail("missing GIF87a/GIF89a signature");

    ByteReader r(bytes);
    r.skip(6);

    GifImage img;
    img.width = r.u16le();
    img.height = r.u16le();
    if (img.width <= 0 || img.height <= 0) fail("zero-sized logical screen");
    const std::uint8_t screen_flags = r.u8();
    r.u8();  // background color index
    r.u8();  // pixel aspect ratio

    ColorTable global;
    if (screen_flags & 0x80)
        global = read_color_table(r, 2 << (screen_flags & 0x07));

    const std::size_t canvas_px = static_cast<std::size_t>(img.width) * img.height;
    std::vector<std::uint8_t> canvas(canvas_px * 4, 0);
    std::vector<std::uint8_t> previous;

    int disposal = 0;
    bool has_transparency = false;
    int transparent_index = -1;

    for (;;) {
        const std::uint8_t block = r.u8();
        if (block == 0x3B) break;  // trailer

        if (block == 0x21) {  // extension
            const std::uint8_t label = r.u8();
            if (label == 0xF9) {  // graphic control
                const std::vector<std::uint8_t> gce = read_sub_blocks(r);
                if (gce.size() >= 4) {
                    disposal = (gce[0] >> 2) & 0x07;
                    has_transparency = (gce[0] & 0x01) != 0;
                    transparent_index = gce[3];
                }
            } else {
                skip_sub_blocks(r);  // comment / application / plain text
            }
            continue;
        }

        if (block != 0x2C) fail("unknown block type " + std::to_string(block));

        const int left = r.u16le();
        const int top = r.u16le();
        const int fw = r.u16le();
        const int fh = r.u16le();
        const std::uint8_t flags = r.u8();
        const bool interlaced = (flags & 0x40) != 0;

        ColorTable local;
        const ColorTable* table = &global;
        if (flags & 0x80) {
            local = read_color_table(r, 2 << (flags & 0x07));
            table = &local;
        }
        if (table->size == 0) fail("image without a color table");

        const int min_code_size = r.u8();
        const std::vector<std::uint8_t> compressed = read_sub_blocks(r);
        const std::size_t frame_px = static_cast<std::size_t>(fw) * fh;
        const std::vector<std::uint8_t> indices = lzw_decode(compressed, min_code_size, frame_px);
        if (indices.size() < frame_px) fail("truncated image data");

        if (disposal == 3) previous = canvas;

        // row order differs under interlacing
        std::vector<int> rows(fh);
        if (interlaced) {
            int out_row = 0;
            for (int pass = 0; pass < 4; ++pass)
                for (int y = kInterlaceStart[pass]; y < fh; y += kInterlaceStep[pass])
                    rows[out_row++] = y;
        } else {
            for (int y = 0; y < fh; ++y) rows[y] = y;
        }

        for (int src_row = 0; src_row < fh; ++src_row) {
            const int y = top + rows[src_row];
            if (y < 0 || y >= img.height) continue;
            for (int x = 0; x < fw; ++x) {
                const int cx = left + x;
                if (cx < 0 || cx >= img.width) continue;
                const std::uint8_t idx = indices[static_cast<std::size_t>(src_row) * fw + x];
                if (has_transparency && idx == transparent_index) continue;
                if (idx >= table->size) fail("pixel index outside color table");
                std::uint8_t* dst = canvas.data() + (static_cast<std::size_t>(y) * img.width + cx) * 4;
                dst[0] = table->rgb[idx][0];
                dst[1] = table->rgb[idx][1];
                dst[2] = table->rgb[idx][2];
                dst[3] = 255;
            }
        }

        img.frames.push_back(GifFrame{canvas});

        if (disposal == 2) {
            for (int y = top; y < top + fh && y < img.height; ++y) {
                if (y < 0) continue;
                for (int x = left; x < left + fw && x < img.width; ++x) {
                    if (x < 0) continue;
                    std::uint8_t* dst = canvas.data() + (static_cast<std::size_t>(y) * img.width + x) * 4;
                    dst[0] = dst[1] = dst[2] = dst[3] = 0;
                }
            }
        } else if (disposal == 3 && !previous.empty()) {
            canvas = previous;
        }

        disposal = 0;
        has_transparency = false;
        transparent_index = -1;
    }

    return img;
}

}  // namespace cartoonqa
