#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msad/errors.hpp"

namespace msad {

/// RGB image, HWC row-major, values in [0, 1].
struct ImageTensor {
    static constexpr int channels = 3;

    int height = 0;
    int width = 0;
    std::vector<float> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w * channels, fill) {}

    bool empty() const noexcept { return height <= 0 || width <= 0; }

    std::size_t index(int y, int x, int c = 0) const noexcept {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    float& at(int y, int x, int c) noexcept { return data[index(y, x, c)]; }
    float at(int y, int x, int c) const noexcept { return data[index(y, x, c)]; }

    void set_pixel(int y, int x, std::array<float, 3> rgb) noexcept {
        for (int c = 0; c < channels; ++c) at(y, x, c) = rgb[c];
    }

    std::array<float, 3> mean_color() const {
        std::array<double, 3> acc{0.0, 0.0, 0.0};
        const std::size_t n = static_cast<std::size_t>(height) * width;
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < channels; ++c) acc[c] += data[i * channels + c];
        std::array<float, 3> out{};
        for (int c = 0; c < channels; ++c) out[c] = n ? static_cast<float>(acc[c] / n) : 0.0f;
        return out;
    }

    bool operator==(const ImageTensor&) const = default;
};

/// Throws InvalidInput unless the image is nonempty, sized consistently and every value is finite in [0,1].
inline void validate(const ImageTensor& image) {
    if (image.empty()) throw InvalidInput("image is empty");
    if (image.data.size() != static_cast<std::size_t>(image.height) * image.width * ImageTensor::channels)
        throw InvalidInput("image buffer size does not match its shape");
    for (float v : image.data)
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw InvalidInput("image value outside [0,1]");
}

/// Single-channel binary map (0 or 1), row-major.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }

    std::size_t area() const noexcept {
        return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
    }

    bool operator==(const BinaryMask&) const = default;
};

/// Intersection over union of two equally shaped masks; 0 when both are empty.
inline double iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width) throw ContractViolation("iou: mask shapes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool pa = a.data[i] != 0, pb = b.data[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Per-pixel nonnegative anomaly scores aligned to an image.
struct ScoreMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    ScoreMap() = default;
    ScoreMap(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int y, int x) noexcept { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const noexcept { return values[static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const ScoreMap& o) const noexcept { return height == o.height && width == o.width; }
    bool operator==(const ScoreMap&) const = default;
};

namespace detail {

/// Bilinear resize of an interleaved raster with half-pixel centers and edge clamping.
/// Returns doubles; callers cast back to their storage type.
template <class T>
std::vector<double> bilinear(std::span<const T> src, int h, int w, int ch, int out_h, int out_w) {
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w * ch);
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;

    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int n_out, int n_in, double scale) {
        std::vector<Tap> t(n_out);
        for (int o = 0; o < n_out; ++o) {
            double p = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(n_in - 1));
            int i0 = static_cast<int>(std::floor(p));
            int i1 = std::min(i0 + 1, n_in - 1);
            t[o] = {i0, i1, p - i0};
        }
        return t;
    };
    const auto ty = taps(out_h, h, sy);
    const auto tx = taps(out_w, w, sx);

    for (int y = 0; y < out_h; ++y) {
        const auto [y0, y1, fy] = ty[y];
        for (int x = 0; x < out_w; ++x) {
            const auto [x0, x1, fx] = tx[x];
            for (int c = 0; c < ch; ++c) {
                auto px = [&](int yy, int xx) {
                    return static_cast<double>(src[(static_cast<std::size_t>(yy) * w + xx) * ch + c]);
                };
                const double a = px(y0, x0), b = px(y0, x1), cc = px(y1, x0), d = px(y1, x1);
                const double top = a + fx * (b - a);
                const double bot = cc + fx * (d - cc);
                out[(static_cast<std::size_t>(y) * out_w + x) * ch + c] = top + fy * (bot - top);
            }
        }
    }
    return out;
}

}  // namespace detail

/// Bilinear resize (half-pixel centers); identical shapes return the input unchanged.
inline ImageTensor resize_bilinear(const ImageTensor& image, int out_h, int out_w) {
    if (image.empty()) throw InvalidInput("resize: empty image");
    if (out_h <= 0 || out_w <= 0) throw InvalidInput("resize: nonpositive target");
    if (out_h == image.height && out_w == image.width) return image;
    auto v = detail::bilinear<float>(image.data, image.height, image.width, ImageTensor::channels, out_h, out_w);
    ImageTensor out(out_h, out_w);
    for (std::size_t i = 0; i < v.size(); ++i) out.data[i] = static_cast<float>(std::clamp(v[i], 0.0, 1.0));
    return out;
}

inline ScoreMap resize_bilinear(const ScoreMap& map, int out_h, int out_w) {
    if (map.height <= 0 || map.width <= 0) throw InvalidInput("resize: empty map");
    if (out_h == map.height && out_w == map.width) return map;
    ScoreMap out(out_h, out_w);
    out.values = detail::bilinear<double>(map.values, map.height, map.width, 1, out_h, out_w);
    for (double& v : out.values) v = std::max(v, 0.0);
    return out;
}

/// Nearest-neighbour resize, used for masks.
inline BinaryMask resize_nearest(const BinaryMask& mask, int out_h, int out_w) {
    if (out_h == mask.height && out_w == mask.width) return mask;
    BinaryMask out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        int sy = std::min(mask.height - 1, static_cast<int>((y + 0.5) * mask.height / out_h));
        for (int x = 0; x < out_w; ++x) {
            int sx = std::min(mask.width - 1, static_cast<int>((x + 0.5) * mask.width / out_w));
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

}  // namespace msad
