#pragma once

// Few-shot branch: test-image windows and patch tokens are compared with the global
// banks, per-object crops with the individual banks, and the nearest-neighbour
// distances become per-pixel scores.

#include <span>
#include <vector>

#include "msad/membank.hpp"
#include "msad/scoremap.hpp"
#include "msad/zeroshot.hpp"

namespace msad {

struct FewShotConfig {
    int canonical_size = kDefaultCanonicalSize;
    int stride_small = 1;
    int stride_middle = 1;
    ScaleWeights global_weights = ScaleWeights::global_defaults();
    ScaleWeights individual_weights = ScaleWeights::individual_defaults();
    FewShotWeights final_weights;
    double temperature = 0.01;
    /// Drop the text-alignment terms from the image score.
    bool text_free = false;
    CropOptions crop;
    int workers = 1;
};

struct ScaleMaps {
    ScoreMap small;
    ScoreMap middle;
    ScoreMap image;
};

struct BankScoreMaps {
    ScaleMaps global;
    ScaleMaps individual;
    std::vector<ObjectCrop> crops;
    bool whole_image_fallback = false;
};

namespace detail {

/// Distance maps of one canonical-size image against the three banks of one kind.
inline ScaleMaps bank_distance_maps(const ImageTensor& canonical, const BankSet& banks, BankKind kind,
                                    const ImageEncoder& enc, int stride_small, int stride_middle) {
    const auto grid = PatchGrid::for_image(canonical, enc.descriptor().patch_size);
    auto window_map = [&](Scale s, int stride) {
        const auto ws = enumerate_windows(grid, s, stride);
        const auto embs = enc.embed_windows(canonical, ws.windows);
        const auto hits = query_many(banks.bank(kind, s), embs);
        std::vector<WindowScore> scores(ws.windows.size());
        for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = {ws.windows[i], hits[i].distance};
        return accumulate_harmonic(scores, grid);
    };
    ScaleMaps out;
    out.small = window_map(Scale::small, stride_small);
    out.middle = window_map(Scale::middle, stride_middle);
    const auto tokens = enc.embed_image(canonical);
    const auto hits = query_many(banks.bank(kind, Scale::image), tokens.patch_tokens);
    std::vector<double> d(hits.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = hits[i].distance;
    out.image = paint_patches(d, grid);
    return out;
}

inline void require_matching_provider(const BankSet& banks, const ImageEncoder& enc) {
    const auto d = enc.descriptor();
    if (d.name != banks.descriptor.name || d.dim != banks.descriptor.dim || d.patch_size != banks.descriptor.patch_size)
        throw ContractViolation("memory banks were built with a different image provider");
}

}  // namespace detail

/// Multi-scale distance maps of `image` in source coordinates, for both bank kinds.
inline BankScoreMaps score_against_banks(const ImageTensor& image, const BankSet& banks, const Providers& prov,
                                         const FewShotConfig& cfg = {}) {
    validate(image);
    detail::require_matching_provider(banks, *prov.image);
    const int patch = prov.image->descriptor().patch_size;
    const ImageTensor canonical = resize_to_canonical(image, cfg.canonical_size, patch);

    BankScoreMaps out;
    auto g = detail::bank_distance_maps(canonical, banks, BankKind::global, *prov.image, cfg.stride_small,
                                        cfg.stride_middle);
    out.global = {resize_bilinear(g.small, image.height, image.width),
                  resize_bilinear(g.middle, image.height, image.width),
                  resize_bilinear(g.image, image.height, image.width)};

    out.crops = object_crops(image, *prov.segmenter, cfg.crop, cfg.canonical_size, &out.whole_image_fallback);
    std::vector<ScaleMaps> per_crop(out.crops.size());
    parallel_for(out.crops.size(), cfg.workers, [&](std::size_t j) {
        per_crop[j] = detail::bank_distance_maps(out.crops[j].crop, banks, BankKind::individual, *prov.image,
                                                 cfg.stride_small, cfg.stride_middle);
    });
    out.individual = {ScoreMap(image.height, image.width), ScoreMap(image.height, image.width),
                      ScoreMap(image.height, image.width)};
    for (std::size_t j = 0; j < out.crops.size(); ++j) {
        const auto& c = out.crops[j];
        out.individual.small = overlay_to_original(per_crop[j].small, c, std::move(out.individual.small)).canvas;
        out.individual.middle = overlay_to_original(per_crop[j].middle, c, std::move(out.individual.middle)).canvas;
        out.individual.image = overlay_to_original(per_crop[j].image, c, std::move(out.individual.image)).canvas;
    }
    return out;
}

struct FewShotResult {
    /// A = (a_multi + max_global) + (a_single + max_indiv).
    double image_score = 0.0;
    ScoreMap map;
    ScoreMap global;
    ScoreMap individual;
    double a_multi = 0.0;
    double a_single = 0.0;
    double max_global = 0.0;
    double max_indiv = 0.0;
    bool text_free = false;

    double a_global() const noexcept { return a_multi + max_global; }
    double a_indiv() const noexcept { return a_single + max_indiv; }
};

inline FewShotResult run_few_shot(const ImageTensor& image, const BankSet& banks, const TextEmbeddingPair& pair,
                                  const Providers& prov, const FewShotConfig& cfg = {}) {
    auto parts = score_against_banks(image, banks, prov, cfg);

    FewShotResult res;
    res.text_free = cfg.text_free;
    res.global = fuse_three_scale(parts.global.small, parts.global.middle, parts.global.image, cfg.global_weights);
    res.individual = fuse_three_scale(parts.individual.small, parts.individual.middle, parts.individual.image,
                                      cfg.individual_weights);
    res.max_global = max_pixel(res.global);
    res.max_indiv = max_pixel(res.individual);

    if (!cfg.text_free) {
        const int patch = prov.image->descriptor().patch_size;
        res.a_multi = image_text_score(resize_to_canonical(image, cfg.canonical_size, patch), pair, *prov.image,
                                       cfg.temperature);
        std::vector<double> singles(parts.crops.size());
        parallel_for(parts.crops.size(), cfg.workers, [&](std::size_t j) {
            singles[j] = image_text_score(parts.crops[j].crop, pair, *prov.image, cfg.temperature);
        });
        res.a_single = *std::max_element(singles.begin(), singles.end());
    }

    res.image_score = res.a_global() + res.a_indiv();
    res.map = fuse_few_shot_final(res.global, res.individual, res.image_score, cfg.final_weights);
    return res;
}

}  // namespace msad
