#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dppp/common.hpp"

namespace dppp {

// Interleaved 8-bit raster, row-major. channels is 1 (gray) or 3 (RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return pixels.empty(); }
    std::size_t size_bytes() const { return pixels.size(); }

    bool operator==(const Image& other) const = default;
};

// Soft alpha matte over an image, values in [0,1].
struct Matte {
    int width = 0;
    int height = 0;
    std::vector<double> alpha;

    Matte() = default;
    Matte(int w, int h, double fill = 0.0)
        : width(w), height(h), alpha(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return alpha[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }

    // Total alpha mass; zero means the segmenter found no foreground.
    double foreground_area() const;
    bool has_foreground() const { return foreground_area() > 0.0; }
};

Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<std::uint8_t>& bytes);

// Center-crop to (w, h); nearest-neighbor upscale first if the source is smaller.
Image center_crop_resize(const Image& src, int w, int h);

} // namespace dppp
