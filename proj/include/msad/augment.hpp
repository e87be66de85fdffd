#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "msad/errors.hpp"
#include "msad/image.hpp"

namespace msad {

/// Reference-image augmentations for bank construction. The identity is always included.
/// Translations are in canonical-resolution pixels and scale with the source image.
struct AugmentationSpec {
    bool h_flip = true;
    bool v_flip = true;
    std::vector<double> rotations{-10.0, 10.0};
    std::vector<std::pair<int, int>> translations{{12, 0}, {-12, 0}, {0, 12}, {0, -12}};

    static AugmentationSpec none() { return {false, false, {}, {}}; }
};

struct Augmentation {
    enum class Kind { identity, h_flip, v_flip, rotate, translate };
    Kind kind = Kind::identity;
    double degrees = 0.0;
    int dx = 0;
    int dy = 0;

    std::string label() const {
        switch (kind) {
            case Kind::identity: return "identity";
            case Kind::h_flip: return "h_flip";
            case Kind::v_flip: return "v_flip";
            case Kind::rotate: return "rotate(" + std::to_string(degrees) + ")";
            case Kind::translate: return "translate(" + std::to_string(dx) + "," + std::to_string(dy) + ")";
        }
        return "?";
    }
};

inline void validate(const AugmentationSpec& spec, int canonical_size) {
    for (double r : spec.rotations)
        if (!std::isfinite(r) || std::abs(r) > 15.0) throw InvalidConfig("rotation magnitude must be <= 15 degrees");
    const double limit = 0.1 * canonical_size;
    for (auto [dx, dy] : spec.translations)
        if (std::abs(dx) > limit || std::abs(dy) > limit)
            throw InvalidConfig("translation magnitude must be <= 10% of the image side");
}

/// Augmentations in a fixed order: identity, flips, rotations, translations.
inline std::vector<Augmentation> expand(const AugmentationSpec& spec) {
    using K = Augmentation::Kind;
    std::vector<Augmentation> out{{K::identity}};
    if (spec.h_flip) out.push_back({K::h_flip});
    if (spec.v_flip) out.push_back({K::v_flip});
    for (double r : spec.rotations) out.push_back({K::rotate, r});
    for (auto [dx, dy] : spec.translations) out.push_back({K::translate, 0.0, dx, dy});
    return out;
}

/// Applies one augmentation. Pixels sampled from outside the image take the image mean color.
inline ImageTensor apply(const ImageTensor& image, const Augmentation& aug, int canonical_size) {
    using K = Augmentation::Kind;
    const int h = image.height, w = image.width;
    if (aug.kind == K::identity) return image;
    ImageTensor out(h, w);
    if (aug.kind == K::h_flip || aug.kind == K::v_flip) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int sy = aug.kind == K::v_flip ? h - 1 - y : y;
                const int sx = aug.kind == K::h_flip ? w - 1 - x : x;
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(sy, sx, c);
            }
        return out;
    }
    const auto fill = image.mean_color();
    if (aug.kind == K::translate) {
        const int dx = static_cast<int>(std::lround(aug.dx * static_cast<double>(w) / canonical_size));
        const int dy = static_cast<int>(std::lround(aug.dy * static_cast<double>(h) / canonical_size));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int sy = y - dy, sx = x - dx;
                if (sy < 0 || sx < 0 || sy >= h || sx >= w) {
                    out.set_pixel(y, x, fill);
                } else {
                    for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(sy, sx, c);
                }
            }
        return out;
    }
    // Rotation about the image center, bilinear inverse mapping.
    const double t = aug.degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(t), sn = std::sin(t);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double ry = y - cy, rx = x - cx;
            const double sx = cs * rx + sn * ry + cx;
            const double sy = -sn * rx + cs * ry + cy;
            if (sy < 0.0 || sx < 0.0 || sy > h - 1 || sx > w - 1) {
                out.set_pixel(y, x, fill);
                continue;
            }
            const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
            const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            const double fy = sy - y0, fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                const double a = image.at(y0, x0, c), b = image.at(y0, x1, c);
                const double d0 = image.at(y1, x0, c), d1 = image.at(y1, x1, c);
                const double top = a + fx * (b - a), bot = d0 + fx * (d1 - d0);
                out.at(y, x, c) = static_cast<float>(std::clamp(top + fy * (bot - top), 0.0, 1.0));
            }
        }
    return out;
}

}  // namespace msad
