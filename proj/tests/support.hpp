#pragma once

// Test doubles and synthetic fixtures shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "msad/mock_providers.hpp"
#include "msad/providers.hpp"

namespace msad::testing {

/// Image encoder whose window embedding is supplied by a callback.
class LambdaImageEncoder final : public ImageEncoder {
public:
    using WindowFn = std::function<std::vector<float>(const ImageTensor&, const WindowSpec&)>;

    LambdaImageEncoder(int dim, WindowFn fn, int patch_size = kDefaultPatchSize)
        : dim_(dim), patch_(patch_size), fn_(std::move(fn)) {}

    ProviderDescriptor descriptor() const override { return {"lambda", dim_, patch_, true}; }

protected:
    std::vector<std::vector<float>> do_embed_windows(const ImageTensor& img,
                                                     std::span<const WindowSpec> ws) const override {
        std::vector<std::vector<float>> out;
        for (const auto& w : ws) out.push_back(fn_(img, w));
        return out;
    }
    RawImageEmbeddings do_embed_image(const ImageTensor& img) const override {
        RawImageEmbeddings r;
        const auto g = PatchGrid::for_image(img, patch_);
        r.rows = g.rows;
        r.cols = g.cols;
        r.class_token = fn_(img, full_window(g));
        for (int pr = 0; pr < g.rows; ++pr)
            for (int pc = 0; pc < g.cols; ++pc) r.patch_tokens.push_back(fn_(img, {Scale::image, pr, pc, 1, 1}));
        return r;
    }

private:
    int dim_;
    int patch_;
    WindowFn fn_;
};

/// Returns a fixed list of masks regardless of the input image.
class FixedSegmenter final : public Segmenter {
public:
    explicit FixedSegmenter(std::vector<BinaryMask> masks) : masks_(std::move(masks)) {}

protected:
    std::vector<BinaryMask> do_segment(const ImageTensor&) const override { return masks_; }

private:
    std::vector<BinaryMask> masks_;
};

inline Embedding random_unit(std::mt19937_64& rng, int dim) {
    std::normal_distribution<float> nd;
    std::vector<float> v(dim);
    for (auto& x : v) x = nd(rng);
    return normalized(std::move(v));
}

inline ImageTensor random_image(std::mt19937_64& rng, int h, int w) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageTensor img(h, w);
    for (auto& v : img.data) v = u(rng);
    return img;
}

inline void fill_rect(ImageTensor& img, int top, int left, int h, int w, std::array<float, 3> rgb) {
    for (int y = top; y < top + h; ++y)
        for (int x = left; x < left + w; ++x) img.set_pixel(y, x, rgb);
}

inline void fill_disc(ImageTensor& img, double cy, double cx, double r, std::array<float, 3> rgb) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) img.set_pixel(y, x, rgb);
}

inline BinaryMask rect_mask(int h, int w, int top, int left, int mh, int mw) {
    BinaryMask m(h, w);
    for (int y = top; y < top + mh; ++y)
        for (int x = left; x < left + mw; ++x) m.at(y, x) = 1;
    return m;
}

/// Text pair along the first two axes of a `dim`-dimensional space.
inline TextEmbeddingPair axis_pair(int dim) {
    std::vector<float> n(dim, 0.0f), a(dim, 0.0f);
    n[0] = 1.0f;
    a[1] = 1.0f;
    return {Embedding{n}, Embedding{a}};
}

/// Unit vector whose text score against axis_pair(dim) at temperature `tau` is `s`.
inline std::vector<float> embedding_for_score(double s, int dim, double tau = 0.01) {
    const double ca = 0.3;
    const double cn = ca + tau * std::log(1.0 / s - 1.0);
    std::vector<float> v(dim, 0.0f);
    v[0] = static_cast<float>(cn);
    v[1] = static_cast<float>(ca);
    v[2] = static_cast<float>(std::sqrt(1.0 - cn * cn - ca * ca));
    return v;
}

}  // namespace msad::testing
