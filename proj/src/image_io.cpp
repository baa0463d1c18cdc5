#include "ilnet/image_io.hpp"

#include <zlib.h>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ilnet {

namespace {

const uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char* type, const std::vector<uint8_t>& body) {
    put_u32(out, static_cast<uint32_t>(body.size()));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + body.size()));
    put_u32(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
        throw std::invalid_argument("encode_png: malformed image");

    std::vector<uint8_t> out(kSig, kSig + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // adaptive filtering
    ihdr.push_back(0);   // no interlace
    put_chunk(out, "IHDR", ihdr);

    const size_t stride = static_cast<size_t>(img.width) * 3;
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = img.rgb.data() + static_cast<size_t>(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(bound);
    if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("encode_png: deflate failed");
    comp.resize(bound);
    put_chunk(out, "IDAT", comp);
    put_chunk(out, "IEND", {});
    return out;
}

Image decode_png(const uint8_t* data, size_t n) {
    if (n < 8 || std::memcmp(data, kSig, 8) != 0)
        throw std::runtime_error("decode_png: not a PNG stream");

    int width = 0, height = 0;
    bool saw_ihdr = false, saw_iend = false;
    std::vector<uint8_t> idat;

    size_t at = 8;
    while (at + 12 <= n && !saw_iend) {
        const uint32_t len = get_u32(data + at);
        if (at + 12 + len > n) throw std::runtime_error("decode_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(data + at + 4);
        const uint8_t* body = data + at + 8;
        const uint32_t stored_crc = get_u32(body + len);
        uint32_t crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, data + at + 4, len + 4);
        if (crc != stored_crc) throw std::runtime_error("decode_png: chunk crc mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw std::runtime_error("decode_png: bad IHDR");
            width = static_cast<int>(get_u32(body));
            height = static_cast<int>(get_u32(body + 4));
            if (width <= 0 || height <= 0) throw std::runtime_error("decode_png: bad dimensions");
            if (body[8] != 8 || body[9] != 2)
                throw std::runtime_error("decode_png: only 8-bit truecolor supported");
            if (body[12] != 0) throw std::runtime_error("decode_png: interlace unsupported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), body, body + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        // ancillary chunks are skipped
        at += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty())
        throw std::runtime_error("decode_png: missing required chunks");

    const size_t stride = static_cast<size_t>(width) * 3;
    std::vector<uint8_t> raw((stride + 1) * height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int zr = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zr != Z_OK || raw_len != raw.size())
        throw std::runtime_error("decode_png: inflate failed");

    Image img = Image::blank(width, height);
    std::vector<uint8_t> prev(stride, 0);
    for (int y = 0; y < height; ++y) {
        const uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
        const uint8_t* src = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
        uint8_t* dst = img.rgb.data() + static_cast<size_t>(y) * stride;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= 3 ? dst[i - 3] : 0;          // left
            const int b = prev[i];                          // up
            const int c = i >= 3 ? prev[i - 3] : 0;         // up-left
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error("decode_png: unknown row filter");
            }
            dst[i] = static_cast<uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

void write_png(const std::string& path, const Image& img) {
    const std::vector<uint8_t> bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write_png: short write to " + path);
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_png: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_png(bytes.data(), bytes.size());
}

}  // namespace ilnet
