#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scrawl {

// One grayscale text-line image after preprocessing: height 64, width padded
// to a multiple of 16, values in [0,1] with 0 = ink and 1 = background.
struct ImageLine {
    std::string id;
    int height = 0;
    int width = 0;        // padded width
    int orig_width = 0;   // scaled width before white padding
    std::vector<float> pixels;
    bool blank_warning = false;

    float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

struct PgmImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<uint8_t> bytes;
};

namespace detail {

inline int pgm_next_int(std::istream& in) {
    // skips whitespace and '#' comments per the PNM grammar
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw std::runtime_error("pgm: truncated header");
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw std::runtime_error("pgm: malformed header");
    if (c != EOF) in.unget();
    return value;
}

}  // namespace detail

inline PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm: cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("pgm: " + path + " is not binary P5");
    PgmImage img;
    img.width = detail::pgm_next_int(in);
    img.height = detail::pgm_next_int(in);
    img.maxval = detail::pgm_next_int(in);
    if (img.maxval <= 0 || img.maxval > 255) throw std::runtime_error("pgm: unsupported maxval in " + path);
    in.get();  // single whitespace before raster
    img.bytes.resize(static_cast<size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.bytes.size()))
        throw std::runtime_error("pgm: truncated raster in " + path);
    return img;
}

inline void write_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& bytes) {
    if (bytes.size() != static_cast<size_t>(width) * height) throw std::runtime_error("pgm: size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm: cannot write " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// [0,1] float image -> 8-bit raster
inline void write_pgm_floats(const std::string& path, int width, int height, const std::vector<float>& px) {
    std::vector<uint8_t> bytes(px.size());
    for (size_t i = 0; i < px.size(); ++i) {
        const float v = std::clamp(px[i], 0.f, 1.f);
        bytes[i] = static_cast<uint8_t>(std::lround(v * 255.f));
    }
    write_pgm(path, width, height, bytes);
}

namespace detail {

// between-class-variance maximization over the intensity histogram;
// ties resolve to the lowest threshold
inline int otsu_threshold(const std::vector<long>& hist) {
    const long total = std::accumulate(hist.begin(), hist.end(), 0L);
    double sum_all = 0;
    for (size_t v = 0; v < hist.size(); ++v) sum_all += static_cast<double>(v) * hist[v];
    double best = -1.0;
    int best_t = 0;
    long w0 = 0;
    double sum0 = 0;
    for (size_t t = 0; t + 1 < hist.size(); ++t) {
        w0 += hist[t];
        if (w0 == 0) continue;
        const long w1 = total - w0;
        if (w1 == 0) break;
        sum0 += static_cast<double>(t) * hist[t];
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double between = static_cast<double>(w0) * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_t = static_cast<int>(t);
        }
    }
    return best_t;
}

// half-pixel-centered bilinear resample
inline std::vector<float> bilinear_resize(const std::vector<float>& src, int sh, int sw, int dh, int dw) {
    std::vector<float> dst(static_cast<size_t>(dh) * dw);
    const double sy = static_cast<double>(sh) / dh;
    const double sx = static_cast<double>(sw) / dw;
    for (int y = 0; y < dh; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(sh - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, sh - 1);
        const double wy = fy - y0;
        for (int x = 0; x < dw; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(sw - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, sw - 1);
            const double wx = fx - x0;
            const double top = src[static_cast<size_t>(y0) * sw + x0] * (1 - wx) + src[static_cast<size_t>(y0) * sw + x1] * wx;
            const double bot = src[static_cast<size_t>(y1) * sw + x0] * (1 - wx) + src[static_cast<size_t>(y1) * sw + x1] * wx;
            dst[static_cast<size_t>(y) * dw + x] = static_cast<float>(top * (1 - wy) + bot * wy);
        }
    }
    return dst;
}

}  // namespace detail

constexpr int kLineHeight = 64;
constexpr int kWidthMultiple = 16;

inline int pad_width(int w) { return ((w + kWidthMultiple - 1) / kWidthMultiple) * kWidthMultiple; }

// Grayscale-preserving binarization, then height normalization:
//   1. global threshold by between-class-variance maximization
//   2. background (> T) clamped to 1.0, ink (<= T) rescaled into [0,1)
//      keeping relative darkness
//   3. bilinear rescale to height 64 at fixed aspect ratio
//   4. white padding up to the next multiple of 16 columns
inline ImageLine preprocess_image(const std::vector<int>& raw, int height, int width, int raw_max) {
    if (height <= 0 || width <= 0 || raw.size() != static_cast<size_t>(height) * width)
        throw std::runtime_error("preprocess: bad raw dimensions");
    std::vector<long> hist(static_cast<size_t>(raw_max) + 1, 0);
    for (int v : raw) {
        if (v < 0 || v > raw_max) throw std::runtime_error("preprocess: value outside [0, raw_max]");
        ++hist[static_cast<size_t>(v)];
    }
    const long bins_used = std::count_if(hist.begin(), hist.end(), [](long h) { return h > 0; });

    ImageLine line;
    std::vector<float> gray(raw.size());
    if (bins_used <= 1) {
        line.blank_warning = true;
        std::fill(gray.begin(), gray.end(), 1.f);
    } else {
        const int t = detail::otsu_threshold(hist);
        const float ink_scale = 1.f / static_cast<float>(t + 1);
        for (size_t i = 0; i < raw.size(); ++i)
            gray[i] = raw[i] > t ? 1.f : static_cast<float>(raw[i]) * ink_scale;
    }

    const int scaled_w = std::max(1, static_cast<int>(std::lround(static_cast<double>(width) * kLineHeight / height)));
    std::vector<float> scaled =
        height == kLineHeight && scaled_w == width ? gray : detail::bilinear_resize(gray, height, width, kLineHeight, scaled_w);

    line.height = kLineHeight;
    line.orig_width = scaled_w;
    line.width = pad_width(scaled_w);
    line.pixels.assign(static_cast<size_t>(kLineHeight) * line.width, 1.f);
    for (int y = 0; y < kLineHeight; ++y)
        std::copy(scaled.begin() + static_cast<size_t>(y) * scaled_w,
                  scaled.begin() + static_cast<size_t>(y + 1) * scaled_w,
                  line.pixels.begin() + static_cast<size_t>(y) * line.width);
    return line;
}

inline ImageLine preprocess_image(const PgmImage& img) {
    std::vector<int> raw(img.bytes.begin(), img.bytes.end());
    return preprocess_image(raw, img.height, img.width, img.maxval);
}

}  // namespace scrawl
