#pragma once

// Batch orchestration over an ingested dataset. Output tree:
//   <out>/config.yaml                 effective configuration
//   <out>/errors.json                 status, counts and one record per failure
//   <out>/metrics.json                summary over categories
//   <out>/<cat>/banks.msmb            build-bank
//   <out>/<cat>/scores.json           image scores and map locations (zeroshot, test)
//   <out>/<cat>/maps/<defect>/<stem>.{raw,json,png}
//   <out>/<cat>/metrics.json

#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <typeinfo>
#include <vector>

#include "json.hpp"

#include "msad/bankio.hpp"
#include "msad/fewshot.hpp"
#include "msad/mock_providers.hpp"
#include "msad/parallel.hpp"
#include "msad/wire.hpp"
#include "msad/zeroshot.hpp"
#include "msad/io/config.hpp"
#include "msad/io/dataset.hpp"
#include "msad/io/export.hpp"
#include "msad/io/image_io.hpp"

namespace msad::io {

enum class Mode { zeroshot, build_bank, test, fewshot, eval };

inline constexpr const char* to_string(Mode m) noexcept {
    switch (m) {
        case Mode::zeroshot: return "zeroshot";
        case Mode::build_bank: return "build-bank";
        case Mode::test: return "test";
        case Mode::fewshot: return "fewshot";
        case Mode::eval: return "eval";
    }
    return "?";
}

struct ErrorRecord {
    std::string category;
    std::string path;
    std::string stage;
    std::string type;
    std::string message;
};

enum class BatchStatus { ok, partial, failed };

/// Exit codes: 0 full success, 1 some items failed, 2 batch failure.
inline constexpr int exit_code(BatchStatus s) noexcept { return s == BatchStatus::ok ? 0 : s == BatchStatus::partial ? 1 : 2; }

struct BatchReport {
    Mode mode = Mode::zeroshot;
    std::size_t attempted = 0;
    std::size_t failed = 0;
    std::vector<ErrorRecord> errors;
    /// Set when the whole run could not proceed (no test images, unusable config, ...).
    std::string fatal;
    nlohmann::json metrics;

    BatchStatus status() const noexcept {
        if (!fatal.empty() || (attempted > 0 && 2 * failed > attempted)) return BatchStatus::failed;
        return errors.empty() ? BatchStatus::ok : BatchStatus::partial;
    }
    int exit_code() const noexcept { return io::exit_code(status()); }
};

inline std::string error_type(const std::exception& e) {
    if (dynamic_cast<const TransportError*>(&e)) return "TransportError";
    if (dynamic_cast<const ContractViolation*>(&e)) return "ContractViolation";
    if (dynamic_cast<const InvalidConfig*>(&e)) return "InvalidConfig";
    if (dynamic_cast<const InvalidInput*>(&e)) return "InvalidInput";
    if (dynamic_cast<const UndefinedMetric*>(&e)) return "UndefinedMetric";
    if (dynamic_cast<const LoadError*>(&e)) return "LoadError";
    return "Error";
}

/// Mock providers when no endpoint is configured, otherwise the model-server client.
inline Providers make_providers(const RunConfig& c) {
    Providers p;
    if (c.provider.endpoint.empty()) {
        p = make_mock_providers(c.provider.mock_seed, c.provider.mock_dim, c.decompose.patch_size);
    } else {
        wire::ClientOptions opt;
        opt.read_timeout = std::chrono::milliseconds(c.provider.timeout_ms);
        opt.max_attempts = c.provider.max_attempts;
        p = wire::make_remote_providers(c.provider.endpoint, opt);
    }
    const int patch = p.image->descriptor().patch_size;
    if (patch != c.decompose.patch_size)
        throw InvalidConfig("provider patch size " + std::to_string(patch) + " != decompose.patch_size " +
                            std::to_string(c.decompose.patch_size));
    return p;
}

inline std::string class_name_for(const std::string& category) {
    std::string s = category;
    for (auto& ch : s)
        if (ch == '_' || ch == '-') ch = ' ';
    return s;
}

namespace detail {

inline void write_json(const fs::path& p, const nlohmann::json& j) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p);
    if (!f) throw InvalidInput("cannot write " + p.string());
    f << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw LoadError("cannot open " + p.string());
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("bad JSON in " + p.string() + ": " + e.what());
    }
}

struct ImageOutcome {
    bool ok = false;
    double score = 0.0;
    ErrorRecord error;
};

inline nlohmann::json descriptor_json(const ProviderDescriptor& d) {
    return {{"name", d.name}, {"dim", d.dim}, {"patch_size", d.patch_size}};
}

/// Scores every test image of a category and writes maps plus scores.json.
template <class ScoreFn>
void score_category(const CategoryData& cat, const RunConfig& cfg, const std::string& hash, const fs::path& out,
                    Mode mode, const ProviderDescriptor& desc, ScoreFn&& score_image, BatchReport& rep) {
    const fs::path dir = out / cat.name;
    std::vector<ImageOutcome> results(cat.tests.size());
    parallel_for(cat.tests.size(), cfg.run.workers, [&](std::size_t i) {
        const auto& t = cat.tests[i];
        try {
            const auto img = read_image(t.image);
            ScoreMap map;
            const double s = score_image(img, map);
            const fs::path stem = dir / "maps" / t.id;
            fs::create_directories(stem.parent_path());
            export_map(map, stem, hash);
            results[i].ok = true;
            results[i].score = s;
        } catch (const std::exception& e) {
            results[i].error = {cat.name, t.image.string(), to_string(mode), error_type(e), e.what()};
        }
    });

    nlohmann::json images = nlohmann::json::array();
    for (std::size_t i = 0; i < cat.tests.size(); ++i) {
        ++rep.attempted;
        if (!results[i].ok) {
            ++rep.failed;
            rep.errors.push_back(results[i].error);
            continue;
        }
        const auto& t = cat.tests[i];
        images.push_back({{"id", t.id},
                          {"image", t.image.string()},
                          {"anomalous", t.anomalous},
                          {"score", results[i].score},
                          {"map", (fs::path("maps") / t.id).string()},
                          {"mask", t.mask ? nlohmann::json(t.mask->string()) : nlohmann::json(nullptr)}});
    }
    write_json(dir / "scores.json", {{"category", cat.name},
                                     {"mode", to_string(mode)},
                                     {"config_hash", hash},
                                     {"provider", descriptor_json(desc)},
                                     {"ground_truth", cat.has_ground_truth},
                                     {"images", std::move(images)}});
}

inline BankSet build_category_banks(const CategoryData& cat, const RunConfig& cfg, const Providers& prov,
                                    const std::string& hash) {
    const auto k = static_cast<std::size_t>(cfg.fewshot.k);
    if (cat.train.size() < k)
        throw InvalidInput("category " + cat.name + " has " + std::to_string(cat.train.size()) +
                           " readable reference images, need k = " + std::to_string(k));
    std::vector<ImageTensor> refs;
    for (std::size_t i = 0; i < k; ++i) refs.push_back(read_image(cat.train[i]));
    auto banks = build_banks(refs, prov, cfg.bank_config());
    banks.config_hash = hash;
    return banks;
}

}  // namespace detail

/// Reads <out>/<cat>/scores.json and the raw maps it references, writes <out>/<cat>/metrics.json.
/// Returns the per-category JSON; metrics that are undefined for the labels present are null with a reason.
inline nlohmann::json evaluate_category(const fs::path& out, const std::string& category, const PixelF1Options& opt) {
    const fs::path dir = out / category;
    const auto scores = detail::read_json(dir / "scores.json");
    std::vector<LabeledScore> labels;
    for (const auto& im : scores.at("images")) labels.push_back({im.at("score").get<double>(), im.at("anomalous").get<bool>()});

    nlohmann::json m = {{"category", category}, {"images", labels.size()}, {"config_hash", scores.value("config_hash", "")}};
    try {
        const auto f1 = f1_max(labels);
        m["f1_cls"] = f1.f1;
        m["threshold_cls"] = f1.threshold;
        m["auroc"] = auroc(labels);
    } catch (const UndefinedMetric& e) {
        m["f1_cls"] = nullptr;
        m["auroc"] = nullptr;
        m["undefined_cls"] = e.what();
    }

    m["f1_seg"] = nullptr;
    if (scores.value("ground_truth", false) && !labels.empty()) {
        std::vector<ScoreMap> maps;
        std::vector<BinaryMask> gts;
        for (const auto& im : scores["images"]) {
            maps.push_back(read_map(dir / im.at("map").get<std::string>()));
            if (im.at("mask").is_null()) gts.emplace_back(maps.back().height, maps.back().width);
            else gts.push_back(read_mask(im["mask"].get<std::string>()));
        }
        std::vector<std::pair<const ScoreMap*, const BinaryMask*>> pairs;
        for (std::size_t i = 0; i < maps.size(); ++i) pairs.emplace_back(&maps[i], &gts[i]);
        try {
            const auto f1 = f1_seg(pairs, opt);
            m["f1_seg"] = f1.f1;
            m["threshold_seg"] = f1.threshold;
        } catch (const UndefinedMetric& e) {
            m["undefined_seg"] = e.what();
        }
    }
    detail::write_json(dir / "metrics.json", m);
    return m;
}

/// Summary over per-category metrics; means skip undefined entries.
inline nlohmann::json summarize(const std::vector<nlohmann::json>& cats) {
    nlohmann::json j = {{"categories", cats}};
    for (const char* key : {"f1_cls", "auroc", "f1_seg"}) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& c : cats)
            if (c.contains(key) && c[key].is_number()) {
                sum += c[key].get<double>();
                ++n;
            }
        j["mean"][key] = n ? nlohmann::json(sum / static_cast<double>(n)) : nlohmann::json(nullptr);
    }
    return j;
}

inline void write_report(const fs::path& out, const BatchReport& rep) {
    nlohmann::json errs = nlohmann::json::array();
    for (const auto& e : rep.errors)
        errs.push_back({{"category", e.category}, {"path", e.path}, {"stage", e.stage}, {"type", e.type}, {"message", e.message}});
    const auto st = rep.status();
    nlohmann::json j = {{"mode", to_string(rep.mode)},
                        {"status", st == BatchStatus::ok ? "ok" : st == BatchStatus::partial ? "partial" : "failed"},
                        {"exit_code", rep.exit_code()},
                        {"attempted", rep.attempted},
                        {"failed", rep.failed},
                        {"errors", std::move(errs)}};
    if (!rep.fatal.empty()) j["fatal"] = rep.fatal;
    detail::write_json(out / "errors.json", j);
}

/// Metrics for the given categories (all with scores.json under `out` when empty).
/// Only the eval verb counts categories as attempted items; after scoring they are bookkeeping.
inline nlohmann::json run_eval(const fs::path& out, std::vector<std::string> categories, const PixelF1Options& opt,
                               BatchReport& rep, bool count_items = true) {
    if (categories.empty() && fs::is_directory(out))
        for (const auto& d : detail::sorted_subdirs(out))
            if (fs::exists(d / "scores.json")) categories.push_back(d.filename().string());
    if (categories.empty()) throw InvalidInput("no scores.json found under " + out.string());
    std::vector<nlohmann::json> cats;
    for (const auto& c : categories) {
        rep.attempted += count_items;
        try {
            cats.push_back(evaluate_category(out, c, opt));
        } catch (const std::exception& e) {
            rep.failed += count_items;
            rep.errors.push_back({c, (out / c / "scores.json").string(), "eval", error_type(e), e.what()});
        }
    }
    auto summary = summarize(cats);
    detail::write_json(out / "metrics.json", summary);
    return summary;
}

/// Runs one mode over every category of the layout. Never throws for per-item or per-category
/// problems; those land in the report (and in <out>/errors.json).
inline BatchReport run_batch(Mode mode, const DatasetLayout& layout, const RunConfig& cfg, const Providers* prov_in = nullptr) {
    BatchReport rep;
    rep.mode = mode;
    const fs::path out = cfg.run.output;
    const std::string hash = config_hash(cfg);
    try {
        cfg.validate();
        fs::create_directories(out);
        std::ofstream(out / "config.yaml") << to_yaml(cfg);
        for (const auto& issue : layout.issues)
            rep.errors.push_back({"", issue.path.string(), "ingest", "InvalidInput", issue.message});

        if (mode == Mode::eval) {
            std::vector<std::string> cats;
            for (const auto& c : layout.categories) cats.push_back(c.name);
            rep.metrics = run_eval(out, cats, cfg.eval, rep);
            write_report(out, rep);
            return rep;
        }

        const Providers prov = prov_in ? *prov_in : make_providers(cfg);
        const auto desc = prov.image->descriptor();

        if (mode != Mode::build_bank) {
            std::size_t total = 0;
            for (const auto& c : layout.categories) total += c.tests.size();
            if (total == 0) throw InvalidInput("empty test set: no readable test images");
        }

        std::vector<std::string> scored;
        for (const auto& cat : layout.categories) {
            const fs::path dir = out / cat.name;
            if (mode == Mode::zeroshot) {
                const auto pair = embed_text(*prov.text, class_name_for(cat.name), cfg.prompts);
                const auto zcfg = cfg.zeroshot_config();
                detail::score_category(cat, cfg, hash, out, mode, desc, [&](const ImageTensor& img, ScoreMap& map) {
                    auto r = run_zero_shot(img, pair, prov, zcfg);
                    map = std::move(r.map);
                    return r.image_score;
                }, rep);
                scored.push_back(cat.name);
                continue;
            }

            BankSet banks;
            try {
                if (mode == Mode::test) {
                    banks = load_banks(dir / "banks.msmb", &desc);
                } else {
                    if (mode == Mode::build_bank) ++rep.attempted;
                    banks = detail::build_category_banks(cat, cfg, prov, hash);
                    if (mode == Mode::build_bank) {
                        fs::create_directories(dir);
                        save_banks(banks, dir / "banks.msmb");
                    }
                }
            } catch (const std::exception& e) {
                const std::size_t lost = mode == Mode::build_bank ? 1 : cat.tests.size();
                rep.attempted += mode == Mode::build_bank ? 0 : lost;
                rep.failed += lost;
                rep.errors.push_back({cat.name, (dir / "banks.msmb").string(), to_string(mode), error_type(e), e.what()});
                continue;
            }
            if (mode == Mode::build_bank) continue;

            const auto pair = embed_text(*prov.text, class_name_for(cat.name), cfg.prompts);
            const auto fcfg = cfg.fewshot_config();
            detail::score_category(cat, cfg, hash, out, mode, desc, [&](const ImageTensor& img, ScoreMap& map) {
                auto r = run_few_shot(img, banks, pair, prov, fcfg);
                map = std::move(r.map);
                return r.image_score;
            }, rep);
            scored.push_back(cat.name);
        }

        if (!scored.empty() && rep.status() != BatchStatus::failed) rep.metrics = run_eval(out, scored, cfg.eval, rep, false);
    } catch (const std::exception& e) {
        rep.fatal = e.what();
        rep.errors.push_back({"", out.string(), to_string(mode), error_type(e), e.what()});
    }
    try {
        write_report(out, rep);
    } catch (const std::exception&) {
    }
    return rep;
}

}  // namespace msad::io
