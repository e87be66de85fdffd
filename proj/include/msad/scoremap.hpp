#pragma once

// Window scores to pixel maps (harmonic averaging over overlaps) and the fixed-weight
// fusions used by both pipelines.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "msad/decompose.hpp"
#include "msad/errors.hpp"
#include "msad/image.hpp"

namespace msad {

/// Lower clamp applied before inverting a score.
inline constexpr double kHarmonicEpsilon = 1e-6;

struct WindowScore {
    WindowSpec window;
    double score = 0.0;
};

/// Every pixel covered by t windows gets t / sum(1 / max(score, eps)); uncovered pixels get 0.
/// Windows are patch-aligned, so the reduction runs per patch and is painted afterwards.
inline ScoreMap accumulate_harmonic(std::span<const WindowScore> scores, const PatchGrid& grid) {
    const std::size_t cells = static_cast<std::size_t>(grid.rows) * grid.cols;
    std::vector<double> inv_sum(cells, 0.0);
    std::vector<int> count(cells, 0);
    for (const auto& ws : scores) {
        if (!ws.window.fits(grid)) throw ContractViolation("window score outside the patch grid");
        if (!std::isfinite(ws.score)) throw ContractViolation("window score is not finite");
        const double inv = 1.0 / std::max(ws.score, kHarmonicEpsilon);
        for (int r = ws.window.row0; r < ws.window.row0 + ws.window.rows; ++r)
            for (int c = ws.window.col0; c < ws.window.col0 + ws.window.cols; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * grid.cols + c;
                inv_sum[i] += inv;
                ++count[i];
            }
    }
    ScoreMap out(grid.pixel_height(), grid.pixel_width());
    const int p = grid.patch_size;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * grid.cols + c;
            if (count[i] == 0) continue;
            const double v = count[i] / inv_sum[i];
            for (int y = r * p; y < (r + 1) * p; ++y)
                std::fill_n(out.values.begin() + static_cast<std::ptrdiff_t>(y) * out.width + c * p, p, v);
        }
    return out;
}

/// Paints one value per patch onto that patch's pixel footprint (row-major patch order).
inline ScoreMap paint_patches(std::span<const double> patch_scores, const PatchGrid& grid) {
    if (patch_scores.size() != static_cast<std::size_t>(grid.rows) * grid.cols)
        throw ContractViolation("patch score count does not match the grid");
    ScoreMap out(grid.pixel_height(), grid.pixel_width());
    const int p = grid.patch_size;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            const double v = patch_scores[static_cast<std::size_t>(r) * grid.cols + c];
            for (int y = r * p; y < (r + 1) * p; ++y)
                std::fill_n(out.values.begin() + static_cast<std::ptrdiff_t>(y) * out.width + c * p, p, v);
        }
    return out;
}

struct ZeroShotWeights {
    double small = 1.8;
    double middle = 0.2;
};

struct ScaleWeights {
    double small = 1.0;
    double middle = 1.0;
    double image = 1.0;

    static constexpr ScaleWeights global_defaults() { return {1.0, 1.0, 1.0}; }
    static constexpr ScaleWeights individual_defaults() { return {1.5, 0.5, 6.0}; }
};

struct FewShotWeights {
    double global = 0.55;
    double individual = 0.45;
};

namespace detail {

inline void require_same_shape(const ScoreMap& a, const ScoreMap& b) {
    if (!a.same_shape(b)) throw ContractViolation("score maps have different shapes");
}

}  // namespace detail

/// a * (w.small * small + w.middle * mid), pixelwise.
inline ScoreMap fuse_zero_shot(const ScoreMap& small, const ScoreMap& mid, double a, ZeroShotWeights w = {}) {
    detail::require_same_shape(small, mid);
    ScoreMap out(small.height, small.width);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = a * (w.small * small.values[i] + w.middle * mid.values[i]);
    return out;
}

inline ScoreMap fuse_three_scale(const ScoreMap& s, const ScoreMap& m, const ScoreMap& i, ScaleWeights w) {
    detail::require_same_shape(s, m);
    detail::require_same_shape(s, i);
    ScoreMap out(s.height, s.width);
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] = w.small * s.values[k] + w.middle * m.values[k] + w.image * i.values[k];
    return out;
}

inline ScoreMap fuse_few_shot_final(const ScoreMap& global, const ScoreMap& indiv, double a, FewShotWeights w = {}) {
    detail::require_same_shape(global, indiv);
    ScoreMap out(global.height, global.width);
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] = a * (w.global * global.values[k] + w.individual * indiv.values[k]);
    return out;
}

inline double max_pixel(const ScoreMap& map) {
    if (map.values.empty()) throw InvalidInput("max_pixel of an empty map");
    return *std::max_element(map.values.begin(), map.values.end());
}

/// Pixel coordinates (y, x) of the first maximum in raster order.
inline std::pair<int, int> argmax_pixel(const ScoreMap& map) {
    if (map.values.empty()) throw InvalidInput("argmax_pixel of an empty map");
    const auto it = std::max_element(map.values.begin(), map.values.end());
    const auto idx = static_cast<int>(it - map.values.begin());
    return {idx / map.width, idx % map.width};
}

}  // namespace msad
