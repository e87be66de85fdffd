#pragma once

// Deterministic offline providers. The image mock embeds a pixel rectangle as a fixed
// seeded random projection of its per-channel mean, variance and a 4x4 block-average
// thumbnail, so locality, determinism and content sensitivity hold by construction.

#include <array>
#include <cstdint>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "msad/providers.hpp"

namespace msad {

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::vector<float> gaussian_vector(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

}  // namespace detail

class MockImageEncoder final : public ImageEncoder {
public:
    static constexpr int kThumb = 4;
    static constexpr int kFeatures = 1 + 3 + 3 + kThumb * kThumb * 3;
    /// Variance is tiny for natural pixel statistics; scale it up so texture registers.
    static constexpr double kVarianceGain = 8.0;

    explicit MockImageEncoder(std::uint64_t seed = 0, int dim = 128, int patch_size = kDefaultPatchSize)
        : seed_(seed), dim_(dim), patch_size_(patch_size),
          projection_(detail::gaussian_vector(seed ^ 0x9e3779b97f4a7c15ull, static_cast<std::size_t>(dim) * kFeatures)) {}

    ProviderDescriptor descriptor() const override {
        return {"mock-image-" + std::to_string(seed_), dim_, patch_size_, true};
    }

    /// Raw (pre-projection) features of a pixel rectangle; exposed for tests.
    static std::array<double, kFeatures> features(const ImageTensor& img, int y0, int x0, int h, int w) {
        std::array<double, kFeatures> f{};
        f[0] = 1.0;
        std::array<double, 3> sum{}, sq{};
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double v = img.at(y, x, c);
                    sum[c] += v;
                    sq[c] += v * v;
                }
        const double n = static_cast<double>(h) * w;
        for (int c = 0; c < 3; ++c) {
            const double mean = sum[c] / n;
            f[1 + c] = mean - 0.5;
            f[4 + c] = kVarianceGain * std::max(0.0, sq[c] / n - mean * mean);
        }
        int k = 7;
        for (int by = 0; by < kThumb; ++by) {
            const int ya = y0 + by * h / kThumb, yb = y0 + (by + 1) * h / kThumb;
            for (int bx = 0; bx < kThumb; ++bx) {
                const int xa = x0 + bx * w / kThumb, xb = x0 + (bx + 1) * w / kThumb;
                std::array<double, 3> acc{};
                for (int y = ya; y < yb; ++y)
                    for (int x = xa; x < xb; ++x)
                        for (int c = 0; c < 3; ++c) acc[c] += img.at(y, x, c);
                const double cnt = std::max(1, (yb - ya) * (xb - xa));
                for (int c = 0; c < 3; ++c) f[k++] = acc[c] / cnt - 0.5;
            }
        }
        return f;
    }

    std::vector<float> project(const std::array<double, kFeatures>& f) const {
        std::vector<float> out(dim_);
        for (int d = 0; d < dim_; ++d) {
            double s = 0.0;
            const float* row = projection_.data() + static_cast<std::size_t>(d) * kFeatures;
            for (int i = 0; i < kFeatures; ++i) s += row[i] * f[i];
            out[d] = static_cast<float>(s);
        }
        return out;
    }

protected:
    std::vector<std::vector<float>> do_embed_windows(const ImageTensor& image,
                                                     std::span<const WindowSpec> windows) const override {
        std::vector<std::vector<float>> out;
        out.reserve(windows.size());
        for (const auto& w : windows)
            out.push_back(project(features(image, w.row0 * patch_size_, w.col0 * patch_size_, w.rows * patch_size_,
                                           w.cols * patch_size_)));
        return out;
    }

    RawImageEmbeddings do_embed_image(const ImageTensor& image) const override {
        RawImageEmbeddings r;
        r.rows = image.height / patch_size_;
        r.cols = image.width / patch_size_;
        r.class_token = project(features(image, 0, 0, image.height, image.width));
        r.patch_tokens.reserve(static_cast<std::size_t>(r.rows) * r.cols);
        for (int pr = 0; pr < r.rows; ++pr)
            for (int pc = 0; pc < r.cols; ++pc)
                r.patch_tokens.push_back(
                    project(features(image, pr * patch_size_, pc * patch_size_, patch_size_, patch_size_)));
        return r;
    }

private:
    std::uint64_t seed_;
    int dim_;
    int patch_size_;
    std::vector<float> projection_;
};

/// Each distinct prompt maps to a seeded Gaussian direction.
class MockTextEncoder final : public TextEncoder {
public:
    explicit MockTextEncoder(std::uint64_t seed = 0, int dim = 128) : seed_(seed), dim_(dim) {}

    ProviderDescriptor descriptor() const override {
        return {"mock-text-" + std::to_string(seed_), dim_, kDefaultPatchSize, true};
    }

protected:
    std::vector<std::vector<float>> do_encode(std::span<const std::string> prompts) const override {
        std::vector<std::vector<float>> out;
        out.reserve(prompts.size());
        for (const auto& p : prompts) out.push_back(detail::gaussian_vector(detail::fnv1a(p, seed_ + 1469598103934665603ull), dim_));
        return out;
    }

private:
    std::uint64_t seed_;
    int dim_;
};

/// Foreground = mean channel value above a threshold; one mask per 4-connected component,
/// in raster order of each component's first pixel.
class MockSegmenter final : public Segmenter {
public:
    explicit MockSegmenter(double threshold = 0.35, std::size_t min_pixels = 1)
        : threshold_(threshold), min_pixels_(min_pixels) {}

protected:
    std::vector<BinaryMask> do_segment(const ImageTensor& image) const override {
        const int h = image.height, w = image.width;
        std::vector<char> fg(static_cast<std::size_t>(h) * w), seen(fg.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                fg[static_cast<std::size_t>(y) * w + x] =
                    (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0 > threshold_;

        std::vector<BinaryMask> masks;
        std::queue<std::pair<int, int>> q;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                if (!fg[i] || seen[i]) continue;
                BinaryMask m(h, w);
                std::size_t count = 0;
                seen[i] = 1;
                q.emplace(y, x);
                while (!q.empty()) {
                    auto [cy, cx] = q.front();
                    q.pop();
                    m.at(cy, cx) = 1;
                    ++count;
                    constexpr int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
                    for (int k = 0; k < 4; ++k) {
                        const int ny = cy + dy[k], nx = cx + dx[k];
                        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                        if (fg[j] && !seen[j]) {
                            seen[j] = 1;
                            q.emplace(ny, nx);
                        }
                    }
                }
                if (count >= min_pixels_) masks.push_back(std::move(m));
            }
        }
        return masks;
    }

private:
    double threshold_;
    std::size_t min_pixels_;
};

inline Providers make_mock_providers(std::uint64_t seed, int dim = 128, int patch_size = kDefaultPatchSize) {
    return {std::make_shared<MockImageEncoder>(seed, dim, patch_size), std::make_shared<MockTextEncoder>(seed, dim),
            std::make_shared<MockSegmenter>()};
}

}  // namespace msad
