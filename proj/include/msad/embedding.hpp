#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "msad/errors.hpp"

namespace msad {

inline constexpr double kUnitNormTolerance = 1e-5;

/// Unit-norm embedding vector. Construct through `normalized()` to get the invariant.
struct Embedding {
    std::vector<float> values;

    std::size_t dim() const noexcept { return values.size(); }
    std::span<const float> span() const noexcept { return values; }
    bool operator==(const Embedding&) const = default;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ContractViolation("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

inline double dot(const Embedding& a, const Embedding& b) { return dot(a.span(), b.span()); }

inline double l2_norm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

inline double cosine(const Embedding& a, const Embedding& b) {
    const double na = l2_norm(a.span()), nb = l2_norm(b.span());
    if (na == 0.0 || nb == 0.0) throw ContractViolation("cosine of a zero vector");
    return dot(a, b) / (na * nb);
}

/// Scales `raw` to unit length. Throws ContractViolation on non-finite or zero input.
inline Embedding normalized(std::vector<float> raw) {
    for (float v : raw)
        if (!std::isfinite(v)) throw ContractViolation("embedding has non-finite values");
    const double n = l2_norm(raw);
    if (!(n > 0.0)) throw ContractViolation("embedding has zero norm");
    for (float& v : raw) v = static_cast<float>(v / n);
    return Embedding{std::move(raw)};
}

inline bool is_unit(const Embedding& e, double tol = kUnitNormTolerance) {
    return std::abs(l2_norm(e.span()) - 1.0) <= tol;
}

/// Mean of unit vectors, renormalized.
inline Embedding mean_direction(std::span<const Embedding> items) {
    if (items.empty()) throw InvalidConfig("mean of an empty embedding list");
    if (items.size() == 1) return items.front();
    const std::size_t d = items.front().dim();
    std::vector<double> acc(d, 0.0);
    for (const auto& e : items) {
        if (e.dim() != d) throw ContractViolation("mean_direction: dimension mismatch");
        for (std::size_t i = 0; i < d; ++i) acc[i] += e.values[i];
    }
    std::vector<float> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(items.size()));
    return normalized(std::move(out));
}

}  // namespace msad
