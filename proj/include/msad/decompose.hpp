#pragma once

// Multi-scale window enumeration over a ViT patch grid, and per-object square crops
// with the geometry needed to paint crop-space maps back onto the source image.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <utility>
#include <vector>

#include "msad/errors.hpp"
#include "msad/image.hpp"

namespace msad {

inline constexpr int kDefaultPatchSize = 16;
inline constexpr int kDefaultCanonicalSize = 240;

struct PatchGrid {
    int patch_size = kDefaultPatchSize;
    int rows = 0;
    int cols = 0;

    /// Grid for an image whose sides are exact multiples of the patch size.
    static PatchGrid for_image(int height, int width, int patch_size = kDefaultPatchSize) {
        if (patch_size <= 0) throw InvalidInput("patch size must be positive");
        if (height <= 0 || width <= 0 || height % patch_size != 0 || width % patch_size != 0)
            throw InvalidInput("image sides must be positive multiples of the patch size");
        return {patch_size, height / patch_size, width / patch_size};
    }
    static PatchGrid for_image(const ImageTensor& image, int patch_size = kDefaultPatchSize) {
        return for_image(image.height, image.width, patch_size);
    }

    int pixel_height() const noexcept { return rows * patch_size; }
    int pixel_width() const noexcept { return cols * patch_size; }
    bool operator==(const PatchGrid&) const = default;
};

enum class Scale : std::uint8_t { small = 0, middle = 1, image = 2 };

inline constexpr Scale kAllScales[] = {Scale::small, Scale::middle, Scale::image};

inline constexpr std::string_view to_string(Scale s) noexcept {
    switch (s) {
        case Scale::small: return "small";
        case Scale::middle: return "middle";
        case Scale::image: return "image";
    }
    return "?";
}

/// Side length in patches of the square window for a scale; 0 for image scale (whole grid).
inline constexpr int window_side(Scale s) noexcept {
    return s == Scale::small ? 2 : s == Scale::middle ? 3 : 0;
}

/// Rectangle of patches at one scale. Coordinates are patch indices.
struct WindowSpec {
    Scale scale = Scale::small;
    int row0 = 0;
    int col0 = 0;
    int rows = 0;
    int cols = 0;

    bool contains_patch(int r, int c) const noexcept {
        return r >= row0 && r < row0 + rows && c >= col0 && c < col0 + cols;
    }
    bool fits(const PatchGrid& g) const noexcept {
        return rows > 0 && cols > 0 && row0 >= 0 && col0 >= 0 && row0 + rows <= g.rows && col0 + cols <= g.cols;
    }
    bool operator==(const WindowSpec&) const = default;
};

inline WindowSpec full_window(const PatchGrid& g) { return {Scale::image, 0, 0, g.rows, g.cols}; }

/// Enumerated windows plus any patches left uncovered (possible only when stride > window side).
struct WindowSet {
    std::vector<WindowSpec> windows;
    std::vector<std::pair<int, int>> uncovered;

    bool has_gaps() const noexcept { return !uncovered.empty(); }
};

namespace detail {

/// Start offsets along one axis: 0, s, 2s, ... then one final start flush to the edge.
inline std::vector<int> axis_starts(int n, int w, int stride) {
    std::vector<int> starts;
    const int last = n - w;
    for (int p = 0; p < last; p += stride) starts.push_back(p);
    starts.push_back(last);
    return starts;
}

}  // namespace detail

/// Sliding windows over the grid in row-major order. `stride` is in patches.
inline WindowSet enumerate_windows(const PatchGrid& grid, Scale scale, int stride = 1) {
    if (stride < 1) throw InvalidInput("window stride must be >= 1");
    if (grid.rows < 1 || grid.cols < 1) throw InvalidInput("empty patch grid");
    WindowSet out;
    if (scale == Scale::image) {
        out.windows.push_back(full_window(grid));
        return out;
    }
    const int side = window_side(scale);
    if (side > grid.rows || side > grid.cols) throw InvalidInput("window larger than patch grid");

    const auto rs = detail::axis_starts(grid.rows, side, stride);
    const auto cs = detail::axis_starts(grid.cols, side, stride);
    out.windows.reserve(rs.size() * cs.size());
    for (int r : rs)
        for (int c : cs) out.windows.push_back({scale, r, c, side, side});

    if (stride > side) {
        std::vector<char> covered(static_cast<std::size_t>(grid.rows) * grid.cols, 0);
        for (const auto& w : out.windows)
            for (int r = w.row0; r < w.row0 + w.rows; ++r)
                for (int c = w.col0; c < w.col0 + w.cols; ++c) covered[static_cast<std::size_t>(r) * grid.cols + c] = 1;
        for (int r = 0; r < grid.rows; ++r)
            for (int c = 0; c < grid.cols; ++c)
                if (!covered[static_cast<std::size_t>(r) * grid.cols + c]) out.uncovered.emplace_back(r, c);
    }
    return out;
}

/// Square bilinear resize to target x target. The target must be a multiple of the patch size.
inline ImageTensor resize_to_canonical(const ImageTensor& image, int target = kDefaultCanonicalSize,
                                       int patch_size = kDefaultPatchSize) {
    if (image.empty()) throw InvalidInput("resize_to_canonical: empty image");
    if (target <= 0 || patch_size <= 0 || target % patch_size != 0)
        throw InvalidInput("canonical size must be a positive multiple of the patch size");
    return resize_bilinear(image, target, target);
}

struct PixelBox {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
    bool operator==(const PixelBox&) const = default;
};

struct Padding {
    int top = 0;
    int left = 0;
    int bottom = 0;
    int right = 0;
    bool operator==(const Padding&) const = default;
};

/// A single object cut out of a source image, padded to square and resized.
///
/// Geometry: an original pixel (y, x) lands at square coordinate (y - box.top + pad.top),
/// and the square is scaled by `scale_factor` with half-pixel centers to give the crop.
struct ObjectCrop {
    ImageTensor crop;
    BinaryMask mask;
    PixelBox bbox_original;
    Padding pad;
    double scale_factor = 1.0;
    int source_height = 0;
    int source_width = 0;
    std::size_t mask_area = 0;

    std::pair<double, double> to_crop(double y, double x) const noexcept {
        return {(y - bbox_original.top + pad.top + 0.5) * scale_factor - 0.5,
                (x - bbox_original.left + pad.left + 0.5) * scale_factor - 0.5};
    }
    std::pair<double, double> to_original(double cy, double cx) const noexcept {
        return {(cy + 0.5) / scale_factor - 0.5 - pad.top + bbox_original.top,
                (cx + 0.5) / scale_factor - 0.5 - pad.left + bbox_original.left};
    }
};

struct CropOptions {
    int target = kDefaultCanonicalSize;
    /// Masks smaller than this fraction of the image area are dropped.
    double min_area = 0.001;
    /// Bbox grown by this fraction of its longer side on each side.
    double margin = 0.05;
    /// Near-duplicate masks above this IoU collapse to the larger one.
    double dedupe_iou = 0.9;
};

/// Tight bounding box of the nonzero pixels; height/width 0 for an empty mask.
inline PixelBox bounding_box(const BinaryMask& mask) {
    int top = mask.height, left = mask.width, bottom = -1, right = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x)) {
                top = std::min(top, y);
                bottom = std::max(bottom, y);
                left = std::min(left, x);
                right = std::max(right, x);
            }
    if (bottom < 0) return {};
    return {top, left, bottom - top + 1, right - left + 1};
}

/// Drops near-duplicates (IoU above threshold keeps the larger) and returns survivors in input order.
inline std::vector<BinaryMask> dedupe_masks(std::vector<BinaryMask> masks, double iou_threshold) {
    std::vector<std::size_t> area(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) area[i] = masks[i].area();
    std::vector<char> keep(masks.size(), 1);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t j = i + 1; j < masks.size(); ++j) {
            if (!keep[j] || iou(masks[i], masks[j]) <= iou_threshold) continue;
            if (area[j] > area[i]) {
                keep[i] = 0;
                break;
            }
            keep[j] = 0;
        }
    }
    std::vector<BinaryMask> out;
    for (std::size_t i = 0; i < masks.size(); ++i)
        if (keep[i]) out.push_back(std::move(masks[i]));
    return out;
}

/// Cuts one square crop per surviving mask, largest mask first.
inline std::vector<ObjectCrop> crop_objects(const ImageTensor& image, std::vector<BinaryMask> masks,
                                            const CropOptions& opt = {}) {
    if (opt.min_area < 0.0 || opt.min_area >= 1.0) throw InvalidConfig("min_area must be in [0, 1)");
    if (opt.target <= 0) throw InvalidConfig("crop target must be positive");
    for (const auto& m : masks)
        if (m.height != image.height || m.width != image.width)
            throw ContractViolation("mask shape differs from image shape");

    masks = dedupe_masks(std::move(masks), opt.dedupe_iou);
    const double min_pixels = opt.min_area * static_cast<double>(image.height) * image.width;

    std::vector<std::pair<std::size_t, std::size_t>> order;  // (area, index)
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const std::size_t a = masks[i].area();
        if (a == 0 || static_cast<double>(a) < min_pixels) continue;
        order.emplace_back(a, i);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    const auto fill = image.mean_color();
    std::vector<ObjectCrop> crops;
    crops.reserve(order.size());
    for (const auto& [a, idx] : order) {
        const BinaryMask& m = masks[idx];
        PixelBox box = bounding_box(m);
        const int grow = static_cast<int>(std::lround(opt.margin * std::max(box.height, box.width)));
        const int top = std::max(0, box.top - grow);
        const int left = std::max(0, box.left - grow);
        const int bottom = std::min(image.height, box.top + box.height + grow);
        const int right = std::min(image.width, box.left + box.width + grow);
        box = {top, left, bottom - top, right - left};

        const int side = std::max(box.height, box.width);
        Padding pad;
        pad.top = (side - box.height) / 2;
        pad.bottom = side - box.height - pad.top;
        pad.left = (side - box.width) / 2;
        pad.right = side - box.width - pad.left;

        ImageTensor square(side, side);
        BinaryMask square_mask(side, side);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) square.set_pixel(y, x, fill);
        for (int y = 0; y < box.height; ++y)
            for (int x = 0; x < box.width; ++x) {
                for (int c = 0; c < ImageTensor::channels; ++c)
                    square.at(y + pad.top, x + pad.left, c) = image.at(box.top + y, box.left + x, c);
                square_mask.at(y + pad.top, x + pad.left) = m.at(box.top + y, box.left + x);
            }

        ObjectCrop oc;
        oc.crop = resize_bilinear(square, opt.target, opt.target);
        oc.mask = resize_nearest(square_mask, opt.target, opt.target);
        oc.bbox_original = box;
        oc.pad = pad;
        oc.scale_factor = static_cast<double>(opt.target) / side;
        oc.source_height = image.height;
        oc.source_width = image.width;
        oc.mask_area = a;
        crops.push_back(std::move(oc));
    }
    return crops;
}

/// The whole image as a single object (used when segmentation finds nothing).
inline ObjectCrop whole_image_crop(const ImageTensor& image, int target) {
    BinaryMask full(image.height, image.width, 1);
    CropOptions opt;
    opt.target = target;
    opt.min_area = 0.0;
    auto crops = crop_objects(image, {std::move(full)}, opt);
    return std::move(crops.front());
}

/// Bilinear sample with edge clamping; coordinates are pixel-center based.
inline double sample_bilinear(const ScoreMap& m, double y, double x) noexcept {
    y = std::clamp(y, 0.0, static_cast<double>(m.height - 1));
    x = std::clamp(x, 0.0, static_cast<double>(m.width - 1));
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, m.height - 1), x1 = std::min(x0 + 1, m.width - 1);
    const double fy = y - y0, fx = x - x0;
    const double a = m.at(y0, x0), b = m.at(y0, x1), c = m.at(y1, x0), d = m.at(y1, x1);
    const double top = a + fx * (b - a);
    const double bot = c + fx * (d - c);
    return top + fy * (bot - top);
}

struct OverlayResult {
    ScoreMap canvas;
    /// Bbox pixels that fell outside the canvas and were skipped.
    std::size_t clipped = 0;
};

/// Paints a crop-space map onto `canvas` in source coordinates, keeping the pixelwise maximum.
/// Only pixels whose transported location lies inside the crop mask receive a value.
inline OverlayResult overlay_to_original(const ScoreMap& crop_map, const ObjectCrop& crop, ScoreMap canvas) {
    if (crop_map.height != crop.crop.height || crop_map.width != crop.crop.width)
        throw ContractViolation("overlay: crop map shape differs from crop shape");
    OverlayResult out;
    const auto& b = crop.bbox_original;
    for (int y = b.top; y < b.top + b.height; ++y) {
        for (int x = b.left; x < b.left + b.width; ++x) {
            if (y < 0 || x < 0 || y >= canvas.height || x >= canvas.width) {
                ++out.clipped;
                continue;
            }
            const auto [cy, cx] = crop.to_crop(y, x);
            const int my = std::clamp(static_cast<int>(std::lround(cy)), 0, crop.mask.height - 1);
            const int mx = std::clamp(static_cast<int>(std::lround(cx)), 0, crop.mask.width - 1);
            if (!crop.mask.at(my, mx)) continue;
            double& dst = canvas.at(y, x);
            dst = std::max(dst, sample_bilinear(crop_map, cy, cx));
        }
    }
    out.canvas = std::move(canvas);
    return out;
}

}  // namespace msad
