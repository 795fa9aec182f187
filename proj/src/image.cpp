#include "dppp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <numeric>

namespace dppp {

double Matte::foreground_area() const {
    return std::accumulate(alpha.begin(), alpha.end(), 0.0);
}

namespace {

struct MemReader {
    const std::vector<std::uint8_t>* data;
    std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + len > r->data->size()) {
        png_error(png, "png read past end of buffer");
    }
    std::memcpy(out, r->data->data() + r->pos, len);
    r->pos += len;
}

void png_mem_write(png_structp png, png_bytep in, png_size_t len) {
    auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    v->insert(v->end(), in, in + len);
}

void png_mem_flush(png_structp) {}

} // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
    if (img.empty() || (img.channels != 1 && img.channels != 3)) {
        throw Error("encode_png: expected non-empty 1- or 3-channel image");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("encode_png: libpng failure");
    }
    png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
    const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = const_cast<png_bytep>(img.pixels.data() +
                                        static_cast<std::size_t>(y) * img.width * img.channels);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw Error("decode_png: not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    MemReader reader{&bytes, 0};
    Image img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("decode_png: libpng failure");
    }
    png_set_read_fn(png, &reader, png_mem_read);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    png_set_strip_alpha(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    if (img.channels != 1 && img.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("decode_png: unsupported channel count");
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Image read_png(const std::filesystem::path& path) {
    const std::string raw = read_text_file(path);
    return decode_png(std::vector<std::uint8_t>(raw.begin(), raw.end()));
}

void write_png(const Image& img, const std::filesystem::path& path) {
    const auto bytes = encode_png(img);
    write_text_file(path, std::string(bytes.begin(), bytes.end()));
}

Image center_crop_resize(const Image& src, int w, int h) {
    if (src.empty()) {
        throw Error("center_crop_resize: empty source");
    }
    Image scaled = src;
    if (src.width < w || src.height < h) {
        // Nearest-neighbor upscale preserving the full frame.
        const double fx = static_cast<double>(w) / src.width;
        const double fy = static_cast<double>(h) / src.height;
        const double f = std::max(fx, fy);
        const int nw = std::max(w, static_cast<int>(src.width * f + 0.5));
        const int nh = std::max(h, static_cast<int>(src.height * f + 0.5));
        scaled = Image(nw, nh, src.channels);
        for (int y = 0; y < nh; ++y) {
            const int sy = std::min(src.height - 1, static_cast<int>(y / f));
            for (int x = 0; x < nw; ++x) {
                const int sx = std::min(src.width - 1, static_cast<int>(x / f));
                for (int c = 0; c < src.channels; ++c) {
                    scaled.at(x, y, c) = src.at(sx, sy, c);
                }
            }
        }
    }
    const int x0 = (scaled.width - w) / 2;
    const int y0 = (scaled.height - h) / 2;
    Image out(w, h, scaled.channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < scaled.channels; ++c) {
                out.at(x, y, c) = scaled.at(x0 + x, y0 + y, c);
            }
        }
    }
    return out;
}

} // namespace dppp
