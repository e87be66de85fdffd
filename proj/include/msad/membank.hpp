#pragma once

// Global and individual multi-scale memory banks: construction from augmented
// reference images, per-bank random capping, and exact cosine nearest-neighbour search.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <cblas.h>

#include "msad/augment.hpp"
#include "msad/decompose.hpp"
#include "msad/parallel.hpp"
#include "msad/providers.hpp"
#include "msad/zeroshot.hpp"

namespace msad {

enum class BankKind : std::uint8_t { global = 0, individual = 1 };

inline constexpr std::string_view to_string(BankKind k) noexcept {
    return k == BankKind::global ? "global" : "individual";
}

/// Where a bank row came from. `object` is -1 for rows of the full image.
struct Provenance {
    std::uint32_t image = 0;
    std::uint32_t augmentation = 0;
    std::int32_t object = -1;
    std::uint32_t window = 0;

    bool operator==(const Provenance&) const = default;
    auto operator<=>(const Provenance&) const = default;
};

struct BankQueryResult {
    /// (1 - cos) / 2 to the nearest row, in [0, 1].
    double distance = 0.0;
    std::size_t nearest_row = 0;
};

/// Row-major float32 matrix of unit-norm embeddings. Rows may only be added before freeze().
class MemoryBank {
public:
    MemoryBank() = default;
    MemoryBank(BankKind kind, Scale scale, int dim) : kind_(kind), scale_(scale), dim_(dim) {
        if (dim < 1) throw ContractViolation("bank dimension must be positive");
    }

    BankKind kind() const noexcept { return kind_; }
    Scale scale() const noexcept { return scale_; }
    int dim() const noexcept { return dim_; }
    std::size_t rows() const noexcept { return provenance_.size(); }
    bool empty() const noexcept { return provenance_.empty(); }
    bool frozen() const noexcept { return frozen_; }

    std::span<const float> matrix() const noexcept { return data_; }
    std::span<const float> row(std::size_t i) const noexcept {
        return std::span<const float>(data_).subspan(i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_));
    }
    const std::vector<Provenance>& provenance() const noexcept { return provenance_; }

    void add(const Embedding& e, Provenance p) {
        if (frozen_) throw ContractViolation("cannot add rows to a frozen memory bank");
        if (static_cast<int>(e.dim()) != dim_) throw ContractViolation("embedding dimension differs from bank dimension");
        if (!is_unit(e)) throw ContractViolation("bank rows must be unit-norm");
        data_.insert(data_.end(), e.values.begin(), e.values.end());
        provenance_.push_back(p);
    }

    void reserve(std::size_t n) {
        data_.reserve(n * static_cast<std::size_t>(dim_));
        provenance_.reserve(n);
    }

    void freeze() noexcept { frozen_ = true; }

    /// Adopts a prebuilt matrix (used by the loader and by subsample). Produces a frozen bank.
    static MemoryBank from_rows(BankKind kind, Scale scale, int dim, std::vector<float> data,
                                std::vector<Provenance> provenance) {
        if (data.size() != provenance.size() * static_cast<std::size_t>(dim))
            throw ContractViolation("bank matrix size does not match provenance length");
        MemoryBank b(kind, scale, dim);
        b.data_ = std::move(data);
        b.provenance_ = std::move(provenance);
        b.frozen_ = true;
        return b;
    }

private:
    BankKind kind_ = BankKind::global;
    Scale scale_ = Scale::small;
    int dim_ = 0;
    bool frozen_ = false;
    std::vector<float> data_;
    std::vector<Provenance> provenance_;
};

inline constexpr std::size_t kDefaultBankCapacity = 100'000;

/// Uniform sample of `cap` rows without replacement (original row order kept); identity when n <= cap.
inline MemoryBank subsample(const MemoryBank& bank, std::size_t cap, std::uint64_t seed) {
    if (cap < 1) throw InvalidConfig("bank capacity must be >= 1");
    if (bank.rows() <= cap) {
        MemoryBank copy = bank;
        copy.freeze();
        return copy;
    }
    std::vector<std::size_t> all(bank.rows()), picked;
    std::iota(all.begin(), all.end(), std::size_t{0});
    picked.reserve(cap);
    std::mt19937_64 rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), cap, rng);

    const auto d = static_cast<std::size_t>(bank.dim());
    std::vector<float> data(cap * d);
    std::vector<Provenance> prov(cap);
    for (std::size_t k = 0; k < cap; ++k) {
        const auto r = bank.row(picked[k]);
        std::copy(r.begin(), r.end(), data.begin() + static_cast<std::ptrdiff_t>(k * d));
        prov[k] = bank.provenance()[picked[k]];
    }
    return MemoryBank::from_rows(bank.kind(), bank.scale(), bank.dim(), std::move(data), std::move(prov));
}

namespace detail {

inline constexpr std::size_t kQueryBlock = 256;
inline constexpr std::size_t kRowBlock = 4096;

inline double dot_to_distance(double d) { return std::clamp((1.0 - d) / 2.0, 0.0, 1.0); }

}  // namespace detail

/// Exact nearest neighbours of many queries. Similarities are computed tile by tile
/// (query block x bank-row block) with sgemm; each query keeps the first row reaching its max.
inline std::vector<BankQueryResult> query_many(const MemoryBank& bank, std::span<const Embedding> queries) {
    if (bank.empty()) throw ContractViolation("query against an empty memory bank");
    const auto d = static_cast<std::size_t>(bank.dim());
    for (const auto& q : queries)
        if (q.dim() != d) throw ContractViolation("query dimension differs from bank dimension");

    std::vector<BankQueryResult> out(queries.size());
    std::vector<float> qbuf(detail::kQueryBlock * d);
    std::vector<float> sims(detail::kQueryBlock * detail::kRowBlock);
    std::vector<float> best(detail::kQueryBlock);
    std::vector<std::size_t> arg(detail::kQueryBlock);
    const float* rows = bank.matrix().data();

    for (std::size_t q0 = 0; q0 < queries.size(); q0 += detail::kQueryBlock) {
        const std::size_t nq = std::min(detail::kQueryBlock, queries.size() - q0);
        for (std::size_t i = 0; i < nq; ++i) std::copy_n(queries[q0 + i].values.data(), d, qbuf.data() + i * d);
        std::fill_n(best.begin(), nq, -std::numeric_limits<float>::infinity());
        std::fill_n(arg.begin(), nq, std::size_t{0});

        for (std::size_t r0 = 0; r0 < bank.rows(); r0 += detail::kRowBlock) {
            const std::size_t nr = std::min(detail::kRowBlock, bank.rows() - r0);
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(nq), static_cast<int>(nr),
                        static_cast<int>(d), 1.0f, qbuf.data(), static_cast<int>(d), rows + r0 * d,
                        static_cast<int>(d), 0.0f, sims.data(), static_cast<int>(nr));
            for (std::size_t i = 0; i < nq; ++i) {
                const float* s = sims.data() + i * nr;
                float b = best[i];
                std::size_t a = arg[i];
                for (std::size_t j = 0; j < nr; ++j)
                    if (s[j] > b) {
                        b = s[j];
                        a = r0 + j;
                    }
                best[i] = b;
                arg[i] = a;
            }
        }
        for (std::size_t i = 0; i < nq; ++i) out[q0 + i] = {detail::dot_to_distance(best[i]), arg[i]};
    }
    return out;
}

inline BankQueryResult query(const MemoryBank& bank, const Embedding& e) {
    return query_many(bank, std::span<const Embedding>(&e, 1)).front();
}

/// The six banks of one category plus the provider they were built with.
struct BankSet {
    ProviderDescriptor descriptor;
    std::string config_hash;
    /// Indexed by bank_index(kind, scale).
    std::array<MemoryBank, 6> banks;

    static constexpr std::size_t bank_index(BankKind k, Scale s) noexcept {
        return static_cast<std::size_t>(k) * 3 + static_cast<std::size_t>(s);
    }
    const MemoryBank& bank(BankKind k, Scale s) const noexcept { return banks[bank_index(k, s)]; }
    MemoryBank& bank(BankKind k, Scale s) noexcept { return banks[bank_index(k, s)]; }
};

struct BankConfig {
    int canonical_size = kDefaultCanonicalSize;
    int stride_small = 1;
    int stride_middle = 1;
    AugmentationSpec augment;
    CropOptions crop;
    std::size_t capacity = kDefaultBankCapacity;
    std::uint64_t seed = 0;
    int workers = 1;
};

namespace detail {

/// Appends small/middle window class tokens and image-scale patch tokens of one canonical image.
inline void collect_scales(const ImageTensor& canonical, const ImageEncoder& enc, const BankConfig& cfg,
                           std::array<std::vector<std::pair<Embedding, Provenance>>, 3>& sink, Provenance base) {
    const auto grid = PatchGrid::for_image(canonical, enc.descriptor().patch_size);
    const std::pair<Scale, int> window_scales[] = {{Scale::small, cfg.stride_small}, {Scale::middle, cfg.stride_middle}};
    for (auto [scale, stride] : window_scales) {
        const auto ws = enumerate_windows(grid, scale, stride);
        auto embs = enc.embed_windows(canonical, ws.windows);
        for (std::size_t w = 0; w < embs.size(); ++w) {
            Provenance p = base;
            p.window = static_cast<std::uint32_t>(w);
            sink[static_cast<std::size_t>(scale)].emplace_back(std::move(embs[w]), p);
        }
    }
    auto tokens = enc.embed_image(canonical);
    for (std::size_t t = 0; t < tokens.patch_tokens.size(); ++t) {
        Provenance p = base;
        p.window = static_cast<std::uint32_t>(t);
        sink[static_cast<std::size_t>(Scale::image)].emplace_back(std::move(tokens.patch_tokens[t]), p);
    }
}

}  // namespace detail

/// Builds the six banks from k normal reference images. Any provider error aborts the build.
inline BankSet build_banks(std::span<const ImageTensor> refs, const Providers& prov, const BankConfig& cfg = {}) {
    if (refs.empty()) throw InvalidInput("bank construction needs at least one reference image");
    validate(cfg.augment, cfg.canonical_size);
    const auto desc = prov.image->descriptor();
    validate(desc);
    const auto augs = expand(cfg.augment);

    using Sink = std::array<std::vector<std::pair<Embedding, Provenance>>, 3>;
    struct PerRef {
        Sink global, individual;
    };
    std::vector<PerRef> per_ref(refs.size());

    parallel_for(refs.size(), cfg.workers, [&](std::size_t i) {
        validate(refs[i]);
        for (std::size_t a = 0; a < augs.size(); ++a) {
            const ImageTensor img = apply(refs[i], augs[a], cfg.canonical_size);
            const Provenance base{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(a), -1, 0};
            detail::collect_scales(resize_to_canonical(img, cfg.canonical_size, desc.patch_size), *prov.image, cfg,
                                   per_ref[i].global, base);
            const auto crops = object_crops(img, *prov.segmenter, cfg.crop, cfg.canonical_size);
            for (std::size_t j = 0; j < crops.size(); ++j) {
                Provenance pj = base;
                pj.object = static_cast<std::int32_t>(j);
                detail::collect_scales(crops[j].crop, *prov.image, cfg, per_ref[i].individual, pj);
            }
        }
    });

    BankSet set;
    set.descriptor = desc;
    for (BankKind kind : {BankKind::global, BankKind::individual}) {
        for (Scale scale : kAllScales) {
            MemoryBank bank(kind, scale, desc.dim);
            const auto si = static_cast<std::size_t>(scale);
            std::size_t total = 0;
            for (const auto& r : per_ref) total += (kind == BankKind::global ? r.global : r.individual)[si].size();
            bank.reserve(total);
            for (const auto& r : per_ref)
                for (const auto& [e, p] : (kind == BankKind::global ? r.global : r.individual)[si]) bank.add(e, p);
            bank.freeze();
            const auto idx = BankSet::bank_index(kind, scale);
            set.banks[idx] = subsample(bank, cfg.capacity, cfg.seed + idx);
        }
    }
    return set;
}

}  // namespace msad
