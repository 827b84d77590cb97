#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "soir/image.hpp"

namespace soir {

namespace detail {

inline std::uint32_t crc32_update(std::uint32_t crc, const unsigned char* data, std::size_t len) {
    static std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

inline void png_chunk(std::ofstream& out, const char type[4], const std::vector<unsigned char>& data) {
    auto be32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    be32(static_cast<std::uint32_t>(data.size()));
    out.write(type, 4);
    if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    std::vector<unsigned char> full(4 + data.size());
    std::copy(type, type + 4, full.begin());
    std::copy(data.begin(), data.end(), full.begin() + 4);
    be32(crc32_update(0, full.data(), full.size()));
}

/// zlib stream with stored (uncompressed) deflate blocks.
inline std::vector<unsigned char> zlib_stored(const std::vector<unsigned char>& raw) {
    std::vector<unsigned char> z;
    z.push_back(0x78);
    z.push_back(0x01);
    std::size_t pos = 0;
    do {
        const std::size_t chunk = std::min<std::size_t>(65535, raw.size() - pos);
        const bool final = pos + chunk == raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(static_cast<unsigned char>(chunk & 0xff));
        z.push_back(static_cast<unsigned char>(chunk >> 8));
        z.push_back(static_cast<unsigned char>(~chunk & 0xff));
        z.push_back(static_cast<unsigned char>((~chunk >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
                 raw.begin() + static_cast<std::ptrdiff_t>(pos + chunk));
        pos += chunk;
    } while (pos < raw.size());
    std::uint32_t a = 1, b = 0;
    for (const unsigned char c : raw) {
        a = (a + c) % 65521;
        b = (b + a) % 65521;
    }
    const std::uint32_t adler = (b << 16) | a;
    z.push_back(static_cast<unsigned char>(adler >> 24));
    z.push_back(static_cast<unsigned char>(adler >> 16));
    z.push_back(static_cast<unsigned char>(adler >> 8));
    z.push_back(static_cast<unsigned char>(adler));
    return z;
}

/// Symmetric diverging palette centered at zero (blue - white - red).
inline std::array<unsigned char, 3> diverging_color(double t) {
    auto lerp = [](double a, double b, double w) { return a + (b - a) * w; };
    double r, g, bl;
    if (t < 0.0) {
        const double w = std::min(1.0, -t);
        r = lerp(1.0, 0.13, w);
        g = lerp(1.0, 0.30, w);
        bl = lerp(1.0, 0.75, w);
    } else {
        const double w = std::min(1.0, t);
        r = lerp(1.0, 0.75, w);
        g = lerp(1.0, 0.10, w);
        bl = lerp(1.0, 0.15, w);
    }
    return {static_cast<unsigned char>(r * 255.0 + 0.5), static_cast<unsigned char>(g * 255.0 + 0.5),
            static_cast<unsigned char>(bl * 255.0 + 0.5)};
}

} // namespace detail

/// Heatmap PNG of an image on the diverging palette, zero at white so the
/// sign structure is visible. `scale` replicates pixels for readability.
inline void write_heatmap_png(const std::string& path, const Image2D& img, int scale = 0) {
    if (scale <= 0) scale = std::max(1, 256 / std::max(img.nx(), img.ny()));
    const int w = img.nx() * scale, h = img.ny() * scale;
    const double m = std::max(img.values().cwiseAbs().maxCoeff(), 1e-300);

    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(h) * (1 + 3 * static_cast<std::size_t>(w)));
    for (int py = 0; py < h; ++py) {
        raw.push_back(0); // filter: none
        for (int px = 0; px < w; ++px) {
            const double v = img(px / scale, py / scale) / m;
            const auto rgb = detail::diverging_color(v);
            raw.push_back(rgb[0]);
            raw.push_back(rgb[1]);
            raw.push_back(rgb[2]);
        }
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_heatmap_png: cannot open " + path);
    static const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<unsigned char> ihdr(13);
    auto put32 = [](std::vector<unsigned char>& v, std::size_t at, std::uint32_t x) {
        v[at] = static_cast<unsigned char>(x >> 24);
        v[at + 1] = static_cast<unsigned char>(x >> 16);
        v[at + 2] = static_cast<unsigned char>(x >> 8);
        v[at + 3] = static_cast<unsigned char>(x);
    };
    put32(ihdr, 0, static_cast<std::uint32_t>(w));
    put32(ihdr, 4, static_cast<std::uint32_t>(h));
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 2;  // truecolor
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", detail::zlib_stored(raw));
    detail::png_chunk(out, "IEND", {});
    if (!out) throw std::runtime_error("write_heatmap_png: write failed for " + path);
}

} // namespace soir
