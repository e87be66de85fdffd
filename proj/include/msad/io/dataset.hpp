#pragma once

// Dataset ingestion. Either an MVTec-style tree
//   root/<category>/train/good/*.png
//   root/<category>/test/<good|defect>/*.png
//   root/<category>/ground_truth/<defect>/<name>_mask.png
// or a JSON manifest listing the same information explicitly:
//   {"categories": [{"name": "...", "train": ["a.png", ...],
//                    "test": [{"image": "...", "anomalous": true, "mask": "..."}]}]}
// Manifest paths are relative to the manifest file.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "msad/io/image_io.hpp"

namespace msad::io {

namespace fs = std::filesystem;

struct TestItem {
    fs::path image;
    /// "good" or the defect type directory.
    std::string defect;
    bool anomalous = false;
    std::optional<fs::path> mask;
    /// "<defect>/<stem>", used to name outputs.
    std::string id;
};

struct CategoryData {
    std::string name;
    /// Normal training images, lexicographic. The support set is the first k.
    std::vector<fs::path> train;
    std::vector<TestItem> tests;
    /// Pixel metrics are only computed when every anomalous test image has a mask.
    bool has_ground_truth = false;
};

struct IngestIssue {
    fs::path path;
    std::string message;
};

struct DatasetLayout {
    fs::path root;
    std::vector<CategoryData> categories;
    /// Unreadable files and shape mismatches; the affected items are left out.
    std::vector<IngestIssue> issues;

    const CategoryData& category(const std::string& name) const {
        for (const auto& c : categories)
            if (c.name == name) return c;
        throw InvalidInput("unknown category " + name);
    }
};

struct IngestOptions {
    /// Restrict to these categories (all discovered categories when empty).
    std::vector<std::string> categories;
    /// Decode every image and mask to validate readability and shapes.
    bool check_images = true;
};

namespace detail {

inline bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

inline std::vector<fs::path> sorted_images(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

/// Drops unreadable images and mismatched masks, recording why.
inline void check_category(CategoryData& cat, std::vector<IngestIssue>& issues) {
    std::vector<fs::path> train;
    for (const auto& p : cat.train) {
        try {
            read_image(p);
            train.push_back(p);
        } catch (const Error& e) {
            issues.push_back({p, e.what()});
        }
    }
    cat.train = std::move(train);

    std::vector<TestItem> tests;
    for (auto& t : cat.tests) {
        try {
            const auto img = read_image(t.image);
            if (t.mask) {
                const auto m = read_mask(*t.mask);
                if (m.height != img.height || m.width != img.width) {
                    issues.push_back({*t.mask, "mask shape " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                                                   " differs from image shape " + std::to_string(img.height) + "x" +
                                                   std::to_string(img.width)});
                    cat.has_ground_truth = false;
                    continue;
                }
            }
            tests.push_back(std::move(t));
        } catch (const Error& e) {
            issues.push_back({t.image, e.what()});
        }
    }
    cat.tests = std::move(tests);
}

inline CategoryData ingest_tree_category(const fs::path& dir, std::vector<IngestIssue>& issues) {
    CategoryData cat;
    cat.name = dir.filename().string();
    const auto train_dir = dir / "train" / "good";
    const auto test_dir = dir / "test";
    if (!fs::is_directory(train_dir)) throw InvalidInput("missing directory " + train_dir.string());
    if (!fs::is_directory(test_dir)) throw InvalidInput("missing directory " + test_dir.string());
    cat.train = sorted_images(train_dir);

    const auto gt_dir = dir / "ground_truth";
    cat.has_ground_truth = fs::is_directory(gt_dir);
    for (const auto& defect_dir : sorted_subdirs(test_dir)) {
        const std::string defect = defect_dir.filename().string();
        for (const auto& img : sorted_images(defect_dir)) {
            TestItem t{img, defect, defect != "good", std::nullopt, defect + "/" + img.stem().string()};
            if (t.anomalous && cat.has_ground_truth) {
                const auto mask = gt_dir / defect / (img.stem().string() + "_mask.png");
                if (fs::exists(mask)) {
                    t.mask = mask;
                } else {
                    issues.push_back({mask, "missing ground-truth mask; pixel metrics disabled for " + cat.name});
                    cat.has_ground_truth = false;
                }
            }
            cat.tests.push_back(std::move(t));
        }
    }
    return cat;
}

inline std::vector<CategoryData> ingest_manifest(const fs::path& file) {
    std::ifstream f(file);
    if (!f) throw InvalidInput("cannot open manifest " + file.string());
    const fs::path base = file.parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    std::vector<CategoryData> out;
    try {
        const auto j = nlohmann::json::parse(f);
        for (const auto& c : j.at("categories")) {
            CategoryData cat;
            cat.name = c.at("name").get<std::string>();
            for (const auto& p : c.value("train", nlohmann::json::array())) cat.train.push_back(resolve(p.get<std::string>()));
            cat.has_ground_truth = true;
            for (const auto& t : c.at("test")) {
                TestItem item;
                item.image = resolve(t.at("image").get<std::string>());
                item.anomalous = t.at("anomalous").get<bool>();
                item.defect = t.value("defect", std::string(item.anomalous ? "anomalous" : "good"));
                item.id = item.defect + "/" + item.image.stem().string();
                if (t.contains("mask") && !t["mask"].is_null()) item.mask = resolve(t["mask"].get<std::string>());
                if (item.anomalous && !item.mask) cat.has_ground_truth = false;
                cat.tests.push_back(std::move(item));
            }
            out.push_back(std::move(cat));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("bad manifest " + file.string() + ": " + e.what());
    }
    return out;
}

}  // namespace detail

inline DatasetLayout ingest(const fs::path& root, const IngestOptions& opt = {}) {
    DatasetLayout layout;
    layout.root = root;
    if (fs::is_regular_file(root)) {
        layout.categories = detail::ingest_manifest(root);
        if (!opt.categories.empty()) {
            std::vector<CategoryData> keep;
            for (const auto& name : opt.categories) {
                auto it = std::find_if(layout.categories.begin(), layout.categories.end(),
                                       [&](const CategoryData& c) { return c.name == name; });
                if (it == layout.categories.end()) throw InvalidInput("category " + name + " not in manifest " + root.string());
                keep.push_back(std::move(*it));
            }
            layout.categories = std::move(keep);
        }
    } else {
        if (!fs::is_directory(root)) throw InvalidInput("dataset root does not exist: " + root.string());
        if (opt.categories.empty()) {
            for (const auto& d : detail::sorted_subdirs(root))
                if (fs::is_directory(d / "train") || fs::is_directory(d / "test"))
                    layout.categories.push_back(detail::ingest_tree_category(d, layout.issues));
        } else {
            for (const auto& name : opt.categories) {
                const auto d = root / name;
                if (!fs::is_directory(d)) throw InvalidInput("missing category directory " + d.string());
                layout.categories.push_back(detail::ingest_tree_category(d, layout.issues));
            }
        }
        if (layout.categories.empty()) throw InvalidInput("no categories found under " + root.string());
    }
    if (opt.check_images)
        for (auto& c : layout.categories) detail::check_category(c, layout.issues);
    return layout;
}

}  // namespace msad::io
