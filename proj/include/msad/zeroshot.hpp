#pragma once

// Zero-shot branch: each segmented object is decomposed into small/middle/image windows,
// every window embedding is scored against the normal/anomaly text pair, and the
// per-object maps are painted back onto the source image.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "msad/decompose.hpp"
#include "msad/parallel.hpp"
#include "msad/providers.hpp"
#include "msad/scoremap.hpp"

namespace msad {

struct ZeroShotConfig {
    int canonical_size = kDefaultCanonicalSize;
    int stride_small = 1;
    int stride_middle = 1;
    /// Softmax temperature over (normal, anomaly) cosine similarities.
    double temperature = 0.01;
    ZeroShotWeights weights;
    CropOptions crop;
    /// Also window-score the whole canonical image at small/middle scale and merge (max) into the maps.
    bool full_image_windows = false;
    int workers = 1;
};

/// Two-class softmax over cosine similarities: probability of the anomaly prompt.
inline double text_align_score(const Embedding& e, const TextEmbeddingPair& pair, double temperature = 0.01) {
    if (!(temperature > 0.0)) throw InvalidConfig("temperature must be positive");
    const double cn = dot(e, pair.normal);
    const double ca = dot(e, pair.anomal);
    return 1.0 / (1.0 + std::exp((cn - ca) / temperature));
}

/// Image-level text score of a canonical-size image: mean of the image-scale window score and
/// the unmasked class-token score.
inline double image_text_score(const ImageTensor& canonical, const TextEmbeddingPair& pair,
                               const ImageEncoder& encoder, double temperature) {
    const auto grid = PatchGrid::for_image(canonical, encoder.descriptor().patch_size);
    const double window = text_align_score(encoder.embed_window(canonical, full_window(grid)), pair, temperature);
    const double cls = text_align_score(encoder.embed_image(canonical).class_token, pair, temperature);
    return 0.5 * (window + cls);
}

/// Text-scored small/middle windows of a canonical image, harmonically accumulated.
struct WindowMaps {
    ScoreMap small;
    ScoreMap middle;
};

inline WindowMaps text_window_maps(const ImageTensor& canonical, const TextEmbeddingPair& pair,
                                   const ImageEncoder& encoder, const ZeroShotConfig& cfg) {
    const auto grid = PatchGrid::for_image(canonical, encoder.descriptor().patch_size);
    auto scale_map = [&](Scale s, int stride) {
        const auto ws = enumerate_windows(grid, s, stride);
        const auto embs = encoder.embed_windows(canonical, ws.windows);
        std::vector<WindowScore> scores(ws.windows.size());
        for (std::size_t i = 0; i < scores.size(); ++i)
            scores[i] = {ws.windows[i], text_align_score(embs[i], pair, cfg.temperature)};
        return accumulate_harmonic(scores, grid);
    };
    return {scale_map(Scale::small, cfg.stride_small), scale_map(Scale::middle, cfg.stride_middle)};
}

struct SingleObjectScore {
    double a_single = 0.0;
    double image_window_score = 0.0;
    double class_token_score = 0.0;
    /// Crop-space maps.
    ScoreMap small;
    ScoreMap middle;
};

inline SingleObjectScore score_single_object(const ObjectCrop& crop, const TextEmbeddingPair& pair,
                                             const ImageEncoder& encoder, const ZeroShotConfig& cfg) {
    const ImageTensor& img = crop.crop;
    const auto grid = PatchGrid::for_image(img, encoder.descriptor().patch_size);
    SingleObjectScore out;
    auto maps = text_window_maps(img, pair, encoder, cfg);
    out.small = std::move(maps.small);
    out.middle = std::move(maps.middle);
    out.image_window_score = text_align_score(encoder.embed_window(img, full_window(grid)), pair, cfg.temperature);
    out.class_token_score = text_align_score(encoder.embed_image(img).class_token, pair, cfg.temperature);
    out.a_single = 0.5 * (out.image_window_score + out.class_token_score);
    return out;
}

struct ObjectResult {
    ObjectCrop crop;
    SingleObjectScore score;
};

struct ZeroShotResult {
    /// A(x) = a_multi + max over objects of a_single.
    double image_score = 0.0;
    double a_multi = 0.0;
    ScoreMap map;
    /// Source-image-space multi-scale maps before fusion.
    ScoreMap small;
    ScoreMap middle;
    std::vector<ObjectResult> objects;
    bool whole_image_fallback = false;

    double max_single() const {
        double m = objects.front().score.a_single;
        for (const auto& o : objects) m = std::max(m, o.score.a_single);
        return m;
    }
};

/// Segments `image` into square crops; the whole image is the single object when nothing survives.
inline std::vector<ObjectCrop> object_crops(const ImageTensor& image, const Segmenter& segmenter, CropOptions opt,
                                            int canonical_size, bool* fallback = nullptr) {
    opt.target = canonical_size;
    auto crops = crop_objects(image, segmenter.segment(image), opt);
    if (fallback) *fallback = crops.empty();
    if (crops.empty()) crops.push_back(whole_image_crop(image, canonical_size));
    return crops;
}

inline ZeroShotResult run_zero_shot(const ImageTensor& image, const TextEmbeddingPair& pair, const Providers& prov,
                                    const ZeroShotConfig& cfg = {}) {
    validate(image);
    const int patch = prov.image->descriptor().patch_size;
    const ImageTensor canonical = resize_to_canonical(image, cfg.canonical_size, patch);

    ZeroShotResult res;
    res.a_multi = image_text_score(canonical, pair, *prov.image, cfg.temperature);

    auto crops = object_crops(image, *prov.segmenter, cfg.crop, cfg.canonical_size, &res.whole_image_fallback);
    std::vector<SingleObjectScore> scores(crops.size());
    parallel_for(crops.size(), cfg.workers,
                 [&](std::size_t j) { scores[j] = score_single_object(crops[j], pair, *prov.image, cfg); });

    ScoreMap small(image.height, image.width), middle(image.height, image.width);
    for (std::size_t j = 0; j < crops.size(); ++j) {
        small = overlay_to_original(scores[j].small, crops[j], std::move(small)).canvas;
        middle = overlay_to_original(scores[j].middle, crops[j], std::move(middle)).canvas;
        res.objects.push_back({std::move(crops[j]), std::move(scores[j])});
    }
    if (cfg.full_image_windows) {
        auto full = text_window_maps(canonical, pair, *prov.image, cfg);
        const auto fs = resize_bilinear(full.small, image.height, image.width);
        const auto fm = resize_bilinear(full.middle, image.height, image.width);
        for (std::size_t k = 0; k < small.values.size(); ++k) {
            small.values[k] = std::max(small.values[k], fs.values[k]);
            middle.values[k] = std::max(middle.values[k], fm.values[k]);
        }
    }

    res.image_score = res.a_multi + res.max_single();
    res.map = fuse_zero_shot(small, middle, res.image_score, cfg.weights);
    res.small = std::move(small);
    res.middle = std::move(middle);
    return res;
}

inline ZeroShotResult run_zero_shot(const ImageTensor& image, const std::string& class_name, const Providers& prov,
                                    const ZeroShotConfig& cfg = {}, const PromptSet& prompts = PromptSet::defaults()) {
    return run_zero_shot(image, embed_text(*prov.text, class_name, prompts), prov, cfg);
}

}  // namespace msad
