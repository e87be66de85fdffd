// msad: batch front-end.
//
//   msad zeroshot     --data ROOT --out DIR [--mock-providers SEED | --endpoint URL]
//   msad build-bank   --data ROOT --out DIR [--k 4]
//   msad test         --data ROOT --out DIR
//   msad eval         --out DIR
//   msad export-config [--config FILE] [--set k=v ...]
//
// Settings are applied in order: defaults, --config file, flags, --set overrides.

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "msad/io/batch.hpp"

namespace {

struct Flags {
    std::string config;
    std::string data;
    std::string out;
    std::vector<std::string> categories;
    std::optional<std::uint64_t> mock_seed;
    std::string endpoint;
    std::optional<int> k;
    std::optional<int> workers;
    bool text_free = false;
    std::optional<int> stride_small;
    std::optional<int> stride_middle;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Flags& f, bool needs_data) {
    cmd->add_option("--config", f.config, "YAML run configuration")->check(CLI::ExistingFile);
    if (needs_data) cmd->add_option("--data", f.data, "dataset root or JSON manifest")->required();
    cmd->add_option("--out", f.out, "output directory (run.output)");
    cmd->add_option("--category", f.categories, "restrict to these categories (repeatable)");
    cmd->add_option("--mock-providers", f.mock_seed, "use offline mock providers with this seed");
    cmd->add_option("--endpoint", f.endpoint, "model server URL");
    cmd->add_option("--k", f.k, "few-shot support set size");
    cmd->add_option("--workers", f.workers, "worker threads over images");
    cmd->add_flag("--text-free", f.text_free, "few-shot without text guidance");
    cmd->add_option("--stride-small", f.stride_small, "small-window stride in patches");
    cmd->add_option("--stride-middle", f.stride_middle, "middle-window stride in patches");
    cmd->add_option("--seed", f.seed, "subsampling seed");
    cmd->add_option("--set", f.overrides, "override a config key: section.key=value (repeatable)");
}

msad::io::RunConfig resolve(const Flags& f) {
    using namespace msad::io;
    RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (!f.out.empty()) c.run.output = f.out;
    if (!f.categories.empty()) c.run.categories = f.categories;
    if (f.mock_seed) {
        c.provider.endpoint.clear();
        c.provider.mock_seed = *f.mock_seed;
    }
    if (!f.endpoint.empty()) c.provider.endpoint = f.endpoint;
    if (f.mock_seed && !f.endpoint.empty()) throw msad::InvalidConfig("--mock-providers and --endpoint are exclusive");
    if (f.k) c.fewshot.k = *f.k;
    if (f.workers) c.run.workers = *f.workers;
    if (f.text_free) c.fewshot.text_free = true;
    if (f.stride_small) c.decompose.stride_small = *f.stride_small;
    if (f.stride_middle) c.decompose.stride_middle = *f.stride_middle;
    if (f.seed) c.run.seed = *f.seed;
    for (const auto& o : f.overrides) apply_override(c, o);
    c.validate();
    return c;
}

void print_summary(const msad::io::BatchReport& rep) {
    const auto& m = rep.metrics;
    if (m.is_object() && m.contains("categories"))
        for (const auto& c : m["categories"]) {
            auto num = [&](const char* k) { return c.contains(k) && c[k].is_number() ? std::to_string(c[k].get<double>()) : std::string("n/a"); };
            std::printf("%-20s images=%-5zu F1-cls=%s AUROC=%s F1-seg=%s\n", c["category"].get<std::string>().c_str(),
                        c["images"].get<std::size_t>(), num("f1_cls").c_str(), num("auroc").c_str(), num("f1_seg").c_str());
        }
    std::printf("%s: %zu attempted, %zu failed, %zu errors, exit %d\n", msad::io::to_string(rep.mode), rep.attempted,
                rep.failed, rep.errors.size(), rep.exit_code());
    if (!rep.fatal.empty()) std::fprintf(stderr, "error: %s\n", rep.fatal.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    using namespace msad::io;
    CLI::App app{"Multi-scale memory comparison for zero- and few-shot anomaly detection"};
    app.require_subcommand(1);

    Flags f;
    auto* zs = app.add_subcommand("zeroshot", "score test images against text prompts only");
    auto* bb = app.add_subcommand("build-bank", "build memory banks from the first k train/good images");
    auto* te = app.add_subcommand("test", "score test images against stored banks");
    auto* ev = app.add_subcommand("eval", "recompute metrics from stored scores and maps");
    auto* ec = app.add_subcommand("export-config", "print the effective configuration as YAML");
    for (auto* c : {zs, bb, te}) add_common(c, f, true);
    add_common(ev, f, false);
    std::string config_out;
    ec->add_option("--config", f.config, "YAML run configuration")->check(CLI::ExistingFile);
    ec->add_option("--set", f.overrides, "override a config key: section.key=value (repeatable)");
    ec->add_option("-o,--output", config_out, "write to this file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = resolve(f);
        if (ec->parsed()) {
            const auto y = to_yaml(cfg);
            if (config_out.empty()) std::cout << y;
            else std::ofstream(config_out) << y;
            return 0;
        }

        Mode mode = Mode::zeroshot;
        if (bb->parsed()) mode = Mode::build_bank;
        if (te->parsed()) mode = Mode::test;
        if (ev->parsed()) mode = Mode::eval;

        DatasetLayout layout;
        if (mode == Mode::eval) {
            for (const auto& c : cfg.run.categories) layout.categories.push_back({c, {}, {}, false});
        } else {
            IngestOptions opt;
            opt.categories = cfg.run.categories;
            layout = ingest(f.data, opt);
        }
        const auto rep = run_batch(mode, layout, cfg);
        print_summary(rep);
        return rep.exit_code();
    } catch (const msad::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
