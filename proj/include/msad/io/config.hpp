#pragma once

// Run configuration: one YAML file with a section per pipeline stage. Every
// constant of the method appears as a key with its default value.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "msad/eval.hpp"
#include "msad/fewshot.hpp"
#include "msad/membank.hpp"
#include "msad/zeroshot.hpp"

namespace msad::io {

struct RunConfig {
    struct Provider {
        /// Model-server URL; empty means mock providers.
        std::string endpoint;
        std::uint64_t mock_seed = 0;
        int mock_dim = 128;
        int timeout_ms = 60000;
        int max_attempts = 3;
    } provider;

    struct Decompose {
        int canonical_size = kDefaultCanonicalSize;
        int patch_size = kDefaultPatchSize;
        int stride_small = 1;
        int stride_middle = 1;
    } decompose;

    CropOptions crop;

    struct ZeroShot {
        double temperature = 0.01;
        double lambda_small = 1.8;
        double lambda_middle = 0.2;
        bool full_image_windows = false;
    } zeroshot;

    PromptSet prompts = PromptSet::defaults();

    struct FewShot {
        int k = 4;
        ScaleWeights global_weights = ScaleWeights::global_defaults();
        ScaleWeights individual_weights = ScaleWeights::individual_defaults();
        FewShotWeights final_weights;
        bool text_free = false;
    } fewshot;

    struct Bank {
        std::size_t capacity = kDefaultBankCapacity;
        AugmentationSpec augment;
    } bank;

    PixelF1Options eval;

    struct Run {
        std::filesystem::path output = "msad_out";
        std::vector<std::string> categories;
        int workers = 1;
        std::uint64_t seed = 0;
    } run;

    void validate() const;

    ZeroShotConfig zeroshot_config() const {
        ZeroShotConfig z;
        z.canonical_size = decompose.canonical_size;
        z.stride_small = decompose.stride_small;
        z.stride_middle = decompose.stride_middle;
        z.temperature = zeroshot.temperature;
        z.weights = {zeroshot.lambda_small, zeroshot.lambda_middle};
        z.crop = crop;
        z.full_image_windows = zeroshot.full_image_windows;
        z.workers = 1;
        return z;
    }

    BankConfig bank_config() const {
        BankConfig b;
        b.canonical_size = decompose.canonical_size;
        b.stride_small = decompose.stride_small;
        b.stride_middle = decompose.stride_middle;
        b.augment = bank.augment;
        b.crop = crop;
        b.capacity = bank.capacity;
        b.seed = run.seed;
        b.workers = run.workers;
        return b;
    }

    FewShotConfig fewshot_config() const {
        FewShotConfig f;
        f.canonical_size = decompose.canonical_size;
        f.stride_small = decompose.stride_small;
        f.stride_middle = decompose.stride_middle;
        f.global_weights = fewshot.global_weights;
        f.individual_weights = fewshot.individual_weights;
        f.final_weights = fewshot.final_weights;
        f.temperature = zeroshot.temperature;
        f.text_free = fewshot.text_free;
        f.crop = crop;
        f.workers = 1;
        return f;
    }
};

namespace detail {

/// Shortest decimal that parses back to the same double.
inline YAML::Node num(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return YAML::Node(std::string(buf, r.ptr));
}

inline YAML::Node weights_node(const ScaleWeights& w) {
    YAML::Node n;
    n["small"] = num(w.small);
    n["middle"] = num(w.middle);
    n["image"] = num(w.image);
    return n;
}

template <class T>
void read_key(const YAML::Node& sec, const char* key, T& out) {
    if (sec && sec[key]) out = sec[key].as<T>();
}

inline void read_weights(const YAML::Node& n, ScaleWeights& w) {
    if (!n) return;
    read_key(n, "small", w.small);
    read_key(n, "middle", w.middle);
    read_key(n, "image", w.image);
}

/// Keys that change scores, in a fixed order; the hash is computed over this document.
inline YAML::Node result_node(const RunConfig& c) {
    YAML::Node root;
    root["decompose"]["canonical_size"] = c.decompose.canonical_size;
    root["decompose"]["patch_size"] = c.decompose.patch_size;
    root["decompose"]["stride_small"] = c.decompose.stride_small;
    root["decompose"]["stride_middle"] = c.decompose.stride_middle;
    root["crop"]["min_area"] = num(c.crop.min_area);
    root["crop"]["margin"] = num(c.crop.margin);
    root["crop"]["dedupe_iou"] = num(c.crop.dedupe_iou);
    root["zeroshot"]["temperature"] = num(c.zeroshot.temperature);
    root["zeroshot"]["lambda_small"] = num(c.zeroshot.lambda_small);
    root["zeroshot"]["lambda_middle"] = num(c.zeroshot.lambda_middle);
    root["zeroshot"]["full_image_windows"] = c.zeroshot.full_image_windows;
    root["prompts"]["normal"] = c.prompts.normal;
    root["prompts"]["anomaly"] = c.prompts.anomaly;
    root["fewshot"]["k"] = c.fewshot.k;
    root["fewshot"]["global_weights"] = weights_node(c.fewshot.global_weights);
    root["fewshot"]["individual_weights"] = weights_node(c.fewshot.individual_weights);
    root["fewshot"]["final_weights"]["global"] = num(c.fewshot.final_weights.global);
    root["fewshot"]["final_weights"]["individual"] = num(c.fewshot.final_weights.individual);
    root["fewshot"]["text_free"] = c.fewshot.text_free;
    root["bank"]["capacity"] = c.bank.capacity;
    root["bank"]["augment"]["h_flip"] = c.bank.augment.h_flip;
    root["bank"]["augment"]["v_flip"] = c.bank.augment.v_flip;
    YAML::Node rot(YAML::NodeType::Sequence);
    for (double r : c.bank.augment.rotations) rot.push_back(num(r));
    rot.SetStyle(YAML::EmitterStyle::Flow);
    root["bank"]["augment"]["rotations"] = rot;
    YAML::Node tr(YAML::NodeType::Sequence);
    for (auto [dx, dy] : c.bank.augment.translations) {
        YAML::Node p(YAML::NodeType::Sequence);
        p.push_back(dx);
        p.push_back(dy);
        p.SetStyle(YAML::EmitterStyle::Flow);
        tr.push_back(p);
    }
    root["bank"]["augment"]["translations"] = tr;
    root["eval"]["max_thresholds"] = c.eval.max_thresholds;
    root["eval"]["exact"] = c.eval.exact;
    root["run"]["seed"] = c.run.seed;
    return root;
}

inline std::string emit(const YAML::Node& n) {
    YAML::Emitter out;
    out << n;
    return out.c_str();
}

}  // namespace detail

inline void RunConfig::validate() const {
    if (decompose.patch_size < 1) throw InvalidConfig("decompose.patch_size must be positive");
    if (decompose.canonical_size < decompose.patch_size || decompose.canonical_size % decompose.patch_size != 0)
        throw InvalidConfig("decompose.canonical_size must be a positive multiple of decompose.patch_size");
    if (decompose.stride_small < 1 || decompose.stride_middle < 1) throw InvalidConfig("strides must be >= 1");
    for (double l : {zeroshot.lambda_small, zeroshot.lambda_middle, fewshot.global_weights.small,
                     fewshot.global_weights.middle, fewshot.global_weights.image, fewshot.individual_weights.small,
                     fewshot.individual_weights.middle, fewshot.individual_weights.image, fewshot.final_weights.global,
                     fewshot.final_weights.individual})
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidConfig("all fusion weights must be finite and >= 0");
    if (!(zeroshot.temperature > 0.0)) throw InvalidConfig("zeroshot.temperature must be positive");
    if (prompts.normal.empty() || prompts.anomaly.empty()) throw InvalidConfig("prompt lists must be nonempty");
    if (fewshot.k < 1) throw InvalidConfig("fewshot.k must be >= 1");
    if (bank.capacity < 1) throw InvalidConfig("bank.capacity must be >= 1");
    msad::validate(bank.augment, decompose.canonical_size);
    if (run.workers < 1) throw InvalidConfig("run.workers must be >= 1");
    if (provider.mock_dim < 8) throw InvalidConfig("provider.mock_dim must be >= 8");
    if (eval.max_thresholds < 1) throw InvalidConfig("eval.max_thresholds must be >= 1");
}

/// Full configuration as YAML (result keys plus provider and run plumbing).
inline std::string to_yaml(const RunConfig& c) {
    YAML::Node root = detail::result_node(c);
    root["provider"]["endpoint"] = c.provider.endpoint;
    root["provider"]["mock_seed"] = c.provider.mock_seed;
    root["provider"]["mock_dim"] = c.provider.mock_dim;
    root["provider"]["timeout_ms"] = c.provider.timeout_ms;
    root["provider"]["max_attempts"] = c.provider.max_attempts;
    root["run"]["output"] = c.run.output.string();
    root["run"]["categories"] = c.run.categories;
    root["run"]["workers"] = c.run.workers;
    return detail::emit(root) + "\n";
}

/// FNV-1a 64 of the result-affecting keys, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
    const std::string doc = detail::emit(detail::result_node(c));
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : doc) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void apply_yaml(RunConfig& c, const YAML::Node& root) {
    using detail::read_key;
    try {
        if (const auto p = root["provider"]) {
            read_key(p, "endpoint", c.provider.endpoint);
            read_key(p, "mock_seed", c.provider.mock_seed);
            read_key(p, "mock_dim", c.provider.mock_dim);
            read_key(p, "timeout_ms", c.provider.timeout_ms);
            read_key(p, "max_attempts", c.provider.max_attempts);
        }
        if (const auto d = root["decompose"]) {
            read_key(d, "canonical_size", c.decompose.canonical_size);
            read_key(d, "patch_size", c.decompose.patch_size);
            read_key(d, "stride_small", c.decompose.stride_small);
            read_key(d, "stride_middle", c.decompose.stride_middle);
        }
        if (const auto k = root["crop"]) {
            read_key(k, "min_area", c.crop.min_area);
            read_key(k, "margin", c.crop.margin);
            read_key(k, "dedupe_iou", c.crop.dedupe_iou);
        }
        if (const auto z = root["zeroshot"]) {
            read_key(z, "temperature", c.zeroshot.temperature);
            read_key(z, "lambda_small", c.zeroshot.lambda_small);
            read_key(z, "lambda_middle", c.zeroshot.lambda_middle);
            read_key(z, "full_image_windows", c.zeroshot.full_image_windows);
        }
        if (const auto p = root["prompts"]) {
            read_key(p, "normal", c.prompts.normal);
            read_key(p, "anomaly", c.prompts.anomaly);
        }
        if (const auto f = root["fewshot"]) {
            read_key(f, "k", c.fewshot.k);
            detail::read_weights(f["global_weights"], c.fewshot.global_weights);
            detail::read_weights(f["individual_weights"], c.fewshot.individual_weights);
            if (const auto fw = f["final_weights"]) {
                read_key(fw, "global", c.fewshot.final_weights.global);
                read_key(fw, "individual", c.fewshot.final_weights.individual);
            }
            read_key(f, "text_free", c.fewshot.text_free);
        }
        if (const auto b = root["bank"]) {
            read_key(b, "capacity", c.bank.capacity);
            if (const auto a = b["augment"]) {
                read_key(a, "h_flip", c.bank.augment.h_flip);
                read_key(a, "v_flip", c.bank.augment.v_flip);
                read_key(a, "rotations", c.bank.augment.rotations);
                if (a["translations"]) {
                    c.bank.augment.translations.clear();
                    for (const auto& t : a["translations"]) {
                        if (!t.IsSequence() || t.size() != 2) throw InvalidConfig("bank.augment.translations entries must be [dx, dy]");
                        c.bank.augment.translations.emplace_back(t[0].as<int>(), t[1].as<int>());
                    }
                }
            }
        }
        if (const auto e = root["eval"]) {
            read_key(e, "max_thresholds", c.eval.max_thresholds);
            read_key(e, "exact", c.eval.exact);
        }
        if (const auto r = root["run"]) {
            if (r["output"]) c.run.output = r["output"].as<std::string>();
            read_key(r, "categories", c.run.categories);
            read_key(r, "workers", c.run.workers);
            read_key(r, "seed", c.run.seed);
        }
    } catch (const YAML::Exception& e) {
        throw InvalidConfig(std::string("bad config value: ") + e.what());
    }
}

namespace detail {

/// Rejects keys that the default configuration document does not have.
inline void check_known_keys(const YAML::Node& given, const YAML::Node& reference, const std::string& prefix) {
    if (!given.IsMap()) return;
    for (const auto& kv : given) {
        const auto key = kv.first.as<std::string>();
        const YAML::Node ref = reference[key];
        if (!ref) throw InvalidConfig("unknown config key: " + prefix + key);
        if (ref.IsMap()) check_known_keys(kv.second, ref, prefix + key + ".");
    }
}

}  // namespace detail

inline RunConfig load_config(const std::filesystem::path& path) {
    RunConfig c;
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw InvalidConfig("cannot parse " + path.string() + ": " + e.what());
    }
    if (root.IsNull()) return c;
    if (!root.IsMap()) throw InvalidConfig(path.string() + ": top level must be a mapping");
    detail::check_known_keys(root, YAML::Load(to_yaml(c)), "");
    apply_yaml(c, root);
    c.validate();
    return c;
}

/// Applies one "section.key=value" override; the value is parsed as YAML.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || assignment.find('.') > eq)
        throw InvalidConfig("override must look like section.key=value: " + assignment);
    std::vector<std::string> path;
    std::stringstream ss(assignment.substr(0, eq));
    for (std::string part; std::getline(ss, part, '.');) path.push_back(part);
    YAML::Node value;
    try {
        value = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::Exception& e) {
        throw InvalidConfig("bad override value in " + assignment + ": " + e.what());
    }
    YAML::Node root(YAML::NodeType::Map);
    YAML::Node node = root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        YAML::Node child = node[path[i]];
        node.reset(child);
    }
    node[path.back()] = value;
    detail::check_known_keys(root, YAML::Load(to_yaml(c)), "");
    apply_yaml(c, root);
}

}  // namespace msad::io
