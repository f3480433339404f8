#pragma once

// Minimal binary PGM (P5) / PPM (P6) reading and writing.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adgan/tensor.hpp"

namespace adgan {

struct GrayImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;
};

struct RgbImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;  // interleaved r,g,b
};

inline void write_pgm(const std::filesystem::path& p, const GrayImage& img) {
    std::ofstream f(p, std::ios::binary);
    check(f.good(), "cannot open " + p.string());
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    check(f.good(), "write failed for " + p.string());
}

inline void write_ppm(const std::filesystem::path& p, const RgbImage& img) {
    std::ofstream f(p, std::ios::binary);
    check(f.good(), "cannot open " + p.string());
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    check(f.good(), "write failed for " + p.string());
}

namespace detail {
inline int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    int c = in.get();
    while (std::isspace(c) || c == '#') {
        if (c == '#')
            while (c != '\n' && c != EOF) c = in.get();
        c = in.get();
    }
    int v = 0;
    while (std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}
}  // namespace detail

inline GrayImage read_pgm(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    check(f.good(), "cannot open " + p.string());
    std::string magic(2, '\0');
    f.read(magic.data(), 2);
    check(magic == "P5", p.string() + ": not a binary PGM");
    GrayImage img;
    img.width = detail::read_pnm_token(f);
    img.height = detail::read_pnm_token(f);
    int maxval = detail::read_pnm_token(f);
    check(maxval == 255, p.string() + ": unsupported maxval");
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    check(f.good(), "truncated PGM " + p.string());
    return img;
}

inline RgbImage read_ppm(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    check(f.good(), "cannot open " + p.string());
    std::string magic(2, '\0');
    f.read(magic.data(), 2);
    check(magic == "P6", p.string() + ": not a binary PPM");
    RgbImage img;
    img.width = detail::read_pnm_token(f);
    img.height = detail::read_pnm_token(f);
    int maxval = detail::read_pnm_token(f);
    check(maxval == 255, p.string() + ": unsupported maxval");
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    check(f.good(), "truncated PPM " + p.string());
    return img;
}

}  // namespace adgan
