#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <png.h>
#include <nlohmann/json.hpp>

#include "rigfield/core/errors.hpp"
#include "rigfield/core/types.hpp"

namespace rigfield {

// Row-major, interleaved float image.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int row, int col, int ch = 0) const {
        return (static_cast<std::size_t>(row) * width + col) * channels + ch;
    }
    float& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
    float at(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }

    Rgb rgb(int row, int col) const { return {at(row, col, 0), at(row, col, 1), at(row, col, 2)}; }
    void set_rgb(int row, int col, const Rgb& c) {
        at(row, col, 0) = c.r;
        at(row, col, 1) = c.g;
        at(row, col, 2) = c.b;
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }

    static Image filled(int w, int h, const Rgb& c) {
        Image img(w, h, 3);
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) img.set_rgb(r, col, c);
        return img;
    }
};

inline double mse(const Image& a, const Image& b) {
    require(a.same_shape(b), "mse: image shapes differ");
    double acc = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

inline double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    return m <= 0 ? 200.0 : -10.0 * std::log10(m);
}

// Intersection over union of the masks {v > threshold} of two one-channel maps.
inline double mask_iou(const Image& a, const Image& b, float threshold = 0.5f) {
    require(a.same_shape(b) && a.channels == 1, "mask_iou: expects equally sized one-channel maps");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool x = a.data[i] > threshold, y = b.data[i] > threshold;
        inter += (x && y);
        uni += (x || y);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline void write_png(const std::string& path, const Image& img) {
    require(img.channels == 1 || img.channels == 3, "write_png: 1 or 3 channels required");
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw Error("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialisation failed");
    }
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng failed writing '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < img.height; ++r) {
        for (int i = 0; i < img.width * img.channels; ++i) {
            const float v = std::clamp(img.data[static_cast<std::size_t>(r) * img.width * img.channels + i], 0.f, 1.f);
            row[static_cast<std::size_t>(i)] = static_cast<png_byte>(std::lround(v * 255.f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw FormatError("cannot open '" + path + "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialisation failed");
    }
    Image img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng failed reading '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = static_cast<int>(png_get_channels(png, info));
    img = Image(w, h, c);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (int i = 0; i < w * c; ++i) img.data[static_cast<std::size_t>(r) * w * c + i] = row[static_cast<std::size_t>(i)] / 255.f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

// Float map as raw little-endian float32 (row-major) plus a JSON sidecar
// `<path>.json` holding {"width", "height", "channels", "dtype": "float32le"}.
inline void write_float_map(const std::string& path, const Image& img) {
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot open '" + path + "' for writing");
        static_assert(std::endian::native == std::endian::little, "float map writer assumes a little-endian host");
        os.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    }
    std::ofstream js(path + ".json");
    js << nlohmann::json{{"width", img.width}, {"height", img.height}, {"channels", img.channels},
                         {"dtype", "float32le"}, {"layout", "row-major"}}
              .dump(2)
       << "\n";
}

inline Image read_float_map(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw FormatError("missing sidecar '" + path + ".json'");
    const auto meta = nlohmann::json::parse(js);
    Image img(meta.at("width").get<int>(), meta.at("height").get<int>(), meta.at("channels").get<int>());
    std::ifstream is(path, std::ios::binary);
    is.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!is) throw FormatError("truncated float map '" + path + "'");
    return img;
}

}  // namespace rigfield
