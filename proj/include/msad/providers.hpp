#pragma once

// Contracts for the models the engine depends on. Implementations override the
// protected do_* hooks; the public entry points validate shapes and renormalize
// every embedding before it reaches the engine.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "msad/decompose.hpp"
#include "msad/embedding.hpp"
#include "msad/errors.hpp"
#include "msad/image.hpp"

namespace msad {

struct ProviderDescriptor {
    std::string name;
    int dim = 0;
    int patch_size = kDefaultPatchSize;
    bool deterministic = true;

    bool operator==(const ProviderDescriptor&) const = default;
};

inline void to_json(nlohmann::json& j, const ProviderDescriptor& d) {
    j = {{"name", d.name}, {"dim", d.dim}, {"patch_size", d.patch_size}, {"deterministic", d.deterministic}};
}
inline void from_json(const nlohmann::json& j, ProviderDescriptor& d) {
    j.at("name").get_to(d.name);
    j.at("dim").get_to(d.dim);
    j.at("patch_size").get_to(d.patch_size);
    d.deterministic = j.value("deterministic", true);
}

inline void validate(const ProviderDescriptor& d) {
    if (d.name.empty()) throw ContractViolation("provider descriptor has an empty name");
    if (d.dim < 8) throw ContractViolation("provider dimension must be >= 8");
    if (d.patch_size < 1) throw ContractViolation("provider patch size must be positive");
}

struct ImageEmbeddings {
    Embedding class_token;
    PatchGrid grid;
    /// Row-major, grid.rows * grid.cols entries.
    std::vector<Embedding> patch_tokens;

    const Embedding& patch(int r, int c) const { return patch_tokens[static_cast<std::size_t>(r) * grid.cols + c]; }
};

struct TextEmbeddingPair {
    Embedding normal;
    Embedding anomal;
};

namespace detail {

inline Embedding checked(std::vector<float> raw, int dim, const char* what) {
    if (static_cast<int>(raw.size()) != dim)
        throw ContractViolation(std::string(what) + ": embedding dimension " + std::to_string(raw.size()) +
                                " != descriptor dimension " + std::to_string(dim));
    Embedding e = normalized(std::move(raw));
    if (!is_unit(e)) throw ContractViolation(std::string(what) + ": embedding not unit-norm after renormalization");
    return e;
}

}  // namespace detail

class ImageEncoder {
public:
    virtual ~ImageEncoder() = default;

    virtual ProviderDescriptor descriptor() const = 0;

    /// Embedding of the window region only (masked forward of the window's patches).
    Embedding embed_window(const ImageTensor& image, const WindowSpec& window) const {
        return std::move(embed_windows(image, std::span<const WindowSpec>(&window, 1)).front());
    }

    std::vector<Embedding> embed_windows(const ImageTensor& image, std::span<const WindowSpec> windows) const {
        const auto desc = descriptor();
        const auto grid = grid_for(image, desc);
        for (const auto& w : windows)
            if (!w.fits(grid)) throw ContractViolation("window does not fit the image patch grid");
        auto raw = do_embed_windows(image, windows);
        if (raw.size() != windows.size()) throw ContractViolation("provider returned wrong number of window embeddings");
        std::vector<Embedding> out;
        out.reserve(raw.size());
        for (auto& r : raw) out.push_back(detail::checked(std::move(r), desc.dim, "embed_window"));
        return out;
    }

    ImageEmbeddings embed_image(const ImageTensor& image) const {
        const auto desc = descriptor();
        const auto grid = grid_for(image, desc);
        RawImageEmbeddings raw = do_embed_image(image);
        if (raw.rows != grid.rows || raw.cols != grid.cols ||
            raw.patch_tokens.size() != static_cast<std::size_t>(grid.rows) * grid.cols)
            throw ContractViolation("patch token grid does not match the image patch grid");
        ImageEmbeddings out;
        out.grid = grid;
        out.class_token = detail::checked(std::move(raw.class_token), desc.dim, "embed_image");
        out.patch_tokens.reserve(raw.patch_tokens.size());
        for (auto& p : raw.patch_tokens) out.patch_tokens.push_back(detail::checked(std::move(p), desc.dim, "embed_image"));
        return out;
    }

protected:
    struct RawImageEmbeddings {
        std::vector<float> class_token;
        int rows = 0;
        int cols = 0;
        std::vector<std::vector<float>> patch_tokens;
    };

    virtual std::vector<std::vector<float>> do_embed_windows(const ImageTensor& image,
                                                             std::span<const WindowSpec> windows) const = 0;
    virtual RawImageEmbeddings do_embed_image(const ImageTensor& image) const = 0;

private:
    static PatchGrid grid_for(const ImageTensor& image, const ProviderDescriptor& desc) {
        if (image.empty()) throw ContractViolation("empty image passed to image encoder");
        if (image.height % desc.patch_size != 0 || image.width % desc.patch_size != 0)
            throw ContractViolation("image sides must be multiples of the provider patch size");
        return PatchGrid::for_image(image, desc.patch_size);
    }
};

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual ProviderDescriptor descriptor() const = 0;

    /// One unit-norm embedding per prompt, in order.
    std::vector<Embedding> encode(std::span<const std::string> prompts) const {
        if (prompts.empty()) throw InvalidConfig("text encoder called with no prompts");
        const auto desc = descriptor();
        auto raw = do_encode(prompts);
        if (raw.size() != prompts.size()) throw ContractViolation("text encoder returned wrong number of embeddings");
        std::vector<Embedding> out;
        out.reserve(raw.size());
        for (auto& r : raw) out.push_back(detail::checked(std::move(r), desc.dim, "embed_text"));
        return out;
    }

protected:
    virtual std::vector<std::vector<float>> do_encode(std::span<const std::string> prompts) const = 0;
};

class Segmenter {
public:
    virtual ~Segmenter() = default;

    /// Object masks, each shaped like the image. An empty result is valid.
    std::vector<BinaryMask> segment(const ImageTensor& image) const {
        auto masks = do_segment(image);
        for (const auto& m : masks)
            if (m.height != image.height || m.width != image.width ||
                m.data.size() != static_cast<std::size_t>(m.height) * m.width)
                throw ContractViolation("segmenter returned a mask with the wrong shape");
        return masks;
    }

protected:
    virtual std::vector<BinaryMask> do_segment(const ImageTensor& image) const = 0;
};

/// The three models the pipelines need, shared read-only between workers.
struct Providers {
    std::shared_ptr<const ImageEncoder> image;
    std::shared_ptr<const TextEncoder> text;
    std::shared_ptr<const Segmenter> segmenter;
};

/// Normal and anomaly prompt templates; "{c}" is replaced by the class name.
struct PromptSet {
    std::vector<std::string> normal;
    std::vector<std::string> anomaly;

    static PromptSet defaults() {
        return {{"a photo of a {c}", "a photo of a flawless {c}", "a photo of a perfect {c}"},
                {"a photo of a damaged {c}", "a photo of a {c} with a defect", "a photo of a broken {c}"}};
    }
};

inline std::string fill_template(const std::string& tmpl, const std::string& class_name) {
    std::string out;
    const std::string key = "{c}";
    std::size_t pos = 0;
    for (;;) {
        const std::size_t hit = tmpl.find(key, pos);
        out.append(tmpl, pos, hit == std::string::npos ? std::string::npos : hit - pos);
        if (hit == std::string::npos) break;
        out += class_name;
        pos = hit + key.size();
    }
    return out;
}

/// Grouped text embeddings: the renormalized mean over each template group.
inline TextEmbeddingPair embed_text(const TextEncoder& encoder, const std::string& class_name,
                                    const PromptSet& prompts = PromptSet::defaults()) {
    if (class_name.empty()) throw InvalidInput("class name is empty");
    if (prompts.normal.empty() || prompts.anomaly.empty()) throw InvalidConfig("prompt set has an empty group");
    auto group = [&](const std::vector<std::string>& templates) {
        std::vector<std::string> filled;
        filled.reserve(templates.size());
        for (const auto& t : templates) filled.push_back(fill_template(t, class_name));
        auto embs = encoder.encode(filled);
        return mean_direction(embs);
    };
    return {group(prompts.normal), group(prompts.anomaly)};
}

}  // namespace msad
