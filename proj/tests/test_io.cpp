#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "msad/io/batch.hpp"
#include "synthetic_dataset.hpp"

using namespace msad;
using namespace msad::io;
using namespace msad::testing;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string describe(const BatchReport& r) {
    std::string s = r.fatal;
    for (const auto& e : r.errors) s += "\n" + e.type + ": " + e.message;
    return s;
}

RunConfig fast_config(const fs::path& out) {
    RunConfig c;
    c.run.output = out;
    c.run.workers = 3;
    c.provider.mock_dim = 64;
    c.bank.augment = AugmentationSpec::none();
    c.decompose.stride_small = 2;
    return c;
}

}  // namespace

TEST(Config, DefaultsRoundTripThroughYaml) {
    TempDir tmp;
    RunConfig c;
    c.zeroshot.lambda_small = 1.25;
    c.bank.augment.translations = {{4, -4}};
    c.prompts.normal = {"fine {c}"};
    c.run.categories = {"bottle", "screw"};
    std::ofstream(tmp.path() / "c.yaml") << to_yaml(c);
    const auto back = load_config(tmp.path() / "c.yaml");
    EXPECT_EQ(to_yaml(back), to_yaml(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(back.bank.augment.translations, c.bank.augment.translations);
}

TEST(Config, EveryConstantIsAKeyWithItsDefault) {
    const auto y = YAML::Load(to_yaml(RunConfig{}));
    EXPECT_EQ(y["decompose"]["canonical_size"].as<int>(), 240);
    EXPECT_EQ(y["decompose"]["patch_size"].as<int>(), 16);
    EXPECT_EQ(y["zeroshot"]["temperature"].as<double>(), 0.01);
    EXPECT_EQ(y["zeroshot"]["lambda_small"].as<double>(), 1.8);
    EXPECT_EQ(y["zeroshot"]["lambda_middle"].as<double>(), 0.2);
    EXPECT_EQ(y["fewshot"]["individual_weights"]["image"].as<double>(), 6.0);
    EXPECT_EQ(y["fewshot"]["final_weights"]["global"].as<double>(), 0.55);
    EXPECT_EQ(y["fewshot"]["final_weights"]["individual"].as<double>(), 0.45);
    EXPECT_EQ(y["bank"]["capacity"].as<std::size_t>(), 100000u);
}

TEST(Config, HashTracksResultKeysOnly) {
    RunConfig a, b;
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    b.run.workers = 8;
    b.run.output = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.fewshot.individual_weights.image = 5.0;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, OverridesAndErrors) {
    RunConfig c;
    apply_override(c, "fewshot.text_free=true");
    apply_override(c, "fewshot.individual_weights.image=2.5");
    apply_override(c, "run.categories=[a, b]");
    EXPECT_TRUE(c.fewshot.text_free);
    EXPECT_EQ(c.fewshot.individual_weights.image, 2.5);
    EXPECT_EQ(c.run.categories, (std::vector<std::string>{"a", "b"}));
    EXPECT_THROW(apply_override(c, "fewshot.nope=1"), InvalidConfig);
    EXPECT_THROW(apply_override(c, "textfree"), InvalidConfig);
    EXPECT_THROW(apply_override(c, "fewshot.k=abc"), InvalidConfig);

    TempDir tmp;
    std::ofstream(tmp.path() / "bad.yaml") << "zeroshot:\n  lamda_small: 1.0\n";
    EXPECT_THROW(load_config(tmp.path() / "bad.yaml"), InvalidConfig);
    std::ofstream(tmp.path() / "neg.yaml") << "zeroshot:\n  lambda_small: -1.0\n";
    EXPECT_THROW(load_config(tmp.path() / "neg.yaml"), InvalidConfig);
    std::ofstream(tmp.path() / "div.yaml") << "decompose:\n  canonical_size: 250\n";
    EXPECT_THROW(load_config(tmp.path() / "div.yaml"), InvalidConfig);
    std::ofstream(tmp.path() / "empty.yaml") << "";
    EXPECT_EQ(config_hash(load_config(tmp.path() / "empty.yaml")), config_hash(RunConfig{}));
}

TEST(Export, RawRoundTripIsBitwise) {
    TempDir tmp;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 7.0f);
    ScoreMap m(13, 17);
    for (auto& v : m.values) v = u(rng);
    export_map(m, tmp.path() / "m", "abc");
    const auto back = read_map(tmp.path() / "m");
    ASSERT_EQ(back.height, 13);
    ASSERT_EQ(back.width, 17);
    for (std::size_t i = 0; i < m.values.size(); ++i) EXPECT_EQ(back.values[i], m.values[i]);
    const auto h = read_map_header(tmp.path() / "m");
    EXPECT_EQ(h.config_hash, "abc");
    EXPECT_EQ(h.min, *std::min_element(m.values.begin(), m.values.end()));
    EXPECT_TRUE(fs::exists(tmp.path() / "m.png"));
}

TEST(Export, ConstantMapGivesOneGrayLevel) {
    TempDir tmp;
    export_map(ScoreMap(8, 9, 0.7), tmp.path() / "c", "h");
    const auto img = cv::imread((tmp.path() / "c.png").string(), cv::IMREAD_GRAYSCALE);
    ASSERT_EQ(img.rows, 8);
    double lo, hi;
    cv::minMaxLoc(img, &lo, &hi);
    EXPECT_EQ(lo, hi);
}

TEST(Export, RefusesNaN) {
    TempDir tmp;
    ScoreMap m(4, 4, 1.0);
    m.at(2, 2) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(export_map(m, tmp.path() / "n", "h"), InvalidInput);
    EXPECT_FALSE(fs::exists(tmp.path() / "n.raw"));
    EXPECT_THROW(read_map(tmp.path() / "missing"), LoadError);
}

TEST(Dataset, ValidTreeHasCountsAndOrder) {
    TempDir tmp;
    write_synthetic_category(tmp.path(), "widget", {5, 2, 3});
    const auto d = ingest(tmp.path());
    ASSERT_EQ(d.categories.size(), 1u);
    const auto& c = d.categories[0];
    EXPECT_EQ(c.name, "widget");
    EXPECT_EQ(c.train.size(), 5u);
    ASSERT_EQ(c.tests.size(), 5u);
    EXPECT_TRUE(c.has_ground_truth);
    EXPECT_TRUE(std::is_sorted(c.train.begin(), c.train.end()));
    EXPECT_EQ(c.tests[0].id, "blob/000");
    EXPECT_TRUE(c.tests[0].anomalous);
    EXPECT_TRUE(c.tests[0].mask.has_value());
    EXPECT_EQ(c.tests[3].id, "good/000");
    EXPECT_FALSE(c.tests[3].anomalous);
    EXPECT_TRUE(d.issues.empty());
}

TEST(Dataset, MissingGroundTruthDisablesPixelEval) {
    TempDir tmp;
    SyntheticTree t;
    t.ground_truth = false;
    write_synthetic_category(tmp.path(), "w", t);
    const auto d = ingest(tmp.path());
    EXPECT_FALSE(d.categories[0].has_ground_truth);
    EXPECT_TRUE(d.issues.empty());
}

TEST(Dataset, CorruptImageAndBadMaskAreNamed) {
    TempDir tmp;
    write_synthetic_category(tmp.path(), "w", {4, 2, 2});
    std::ofstream(tmp.path() / "w" / "test" / "good" / "zzz.png") << "not a png";
    write_mask(BinaryMask(10, 10), tmp.path() / "w" / "ground_truth" / "blob" / "001_mask.png");
    const auto d = ingest(tmp.path());
    ASSERT_EQ(d.issues.size(), 2u);
    bool saw_corrupt = false, saw_shape = false;
    for (const auto& i : d.issues) {
        saw_corrupt |= i.path.filename() == "zzz.png" && i.message.find("zzz.png") != std::string::npos;
        saw_shape |= i.path.filename() == "001_mask.png" && i.message.find("shape") != std::string::npos;
    }
    EXPECT_TRUE(saw_corrupt);
    EXPECT_TRUE(saw_shape);
    EXPECT_EQ(d.categories[0].tests.size(), 3u);
    EXPECT_FALSE(d.categories[0].has_ground_truth);
}

TEST(Dataset, MissingCategoryIsAnError) {
    TempDir tmp;
    write_synthetic_category(tmp.path(), "w", {1, 1, 1});
    IngestOptions opt;
    opt.categories = {"absent"};
    EXPECT_THROW(ingest(tmp.path(), opt), InvalidInput);
    EXPECT_THROW(ingest(tmp.path() / "nowhere"), InvalidInput);
    fs::remove_all(tmp.path() / "w" / "test");
    EXPECT_THROW(ingest(tmp.path()), InvalidInput);
}

TEST(Dataset, ManifestListsFilesExplicitly) {
    TempDir tmp;
    write_synthetic_category(tmp.path(), "w", {2, 1, 1});
    const nlohmann::json j = {{"categories",
                               {{{"name", "part"},
                                 {"train", {"w/train/good/001.png", "w/train/good/000.png"}},
                                 {"test",
                                  {{{"image", "w/test/blob/000.png"}, {"anomalous", true}, {"mask", "w/ground_truth/blob/000_mask.png"}},
                                   {{"image", "w/test/good/000.png"}, {"anomalous", false}}}}}}}};
    std::ofstream(tmp.path() / "m.json") << j.dump();
    const auto d = ingest(tmp.path() / "m.json");
    ASSERT_EQ(d.categories.size(), 1u);
    const auto& c = d.categories[0];
    EXPECT_EQ(c.train[0].filename(), "001.png");
    EXPECT_EQ(c.tests.size(), 2u);
    EXPECT_TRUE(c.has_ground_truth);
}

TEST(Batch, ZeroShotEndToEnd) {
    TempDir data, out;
    write_synthetic_category(data.path(), "widget", {0, 3, 3});
    auto cfg = fast_config(out.path());
    const auto rep = run_batch(Mode::zeroshot, ingest(data.path()), cfg);
    ASSERT_EQ(rep.exit_code(), 0) << describe(rep);
    EXPECT_EQ(rep.attempted, 6u);
    const auto scores = nlohmann::json::parse(slurp(out.path() / "widget" / "scores.json"));
    EXPECT_EQ(scores["images"].size(), 6u);
    EXPECT_EQ(scores["config_hash"], config_hash(cfg));
    EXPECT_EQ(read_map_header(out.path() / "widget" / "maps" / "blob" / "000").config_hash, config_hash(cfg));
    const auto m = nlohmann::json::parse(slurp(out.path() / "widget" / "metrics.json"));
    EXPECT_TRUE(m["f1_cls"].is_number());
    EXPECT_TRUE(m["f1_seg"].is_number());
    const auto errs = nlohmann::json::parse(slurp(out.path() / "errors.json"));
    EXPECT_EQ(errs["status"], "ok");
}

TEST(Batch, StagedBuildThenTestEqualsCombinedRun) {
    TempDir data, staged, combined;
    write_synthetic_category(data.path(), "widget", {4, 2, 2});
    const auto layout = ingest(data.path());

    auto cfg = fast_config(staged.path());
    const auto built = run_batch(Mode::build_bank, layout, cfg);
    ASSERT_EQ(built.exit_code(), 0) << describe(built);
    EXPECT_TRUE(fs::exists(staged.path() / "widget" / "banks.msmb"));
    ASSERT_EQ(run_batch(Mode::test, layout, cfg).exit_code(), 0);

    cfg.run.output = combined.path();
    ASSERT_EQ(run_batch(Mode::fewshot, layout, cfg).exit_code(), 0);

    for (const char* id : {"blob/000", "blob/001", "good/000", "good/001"}) {
        const auto rel = fs::path("widget") / "maps" / (std::string(id) + ".raw");
        EXPECT_EQ(slurp(staged.path() / rel), slurp(combined.path() / rel)) << id;
    }
    EXPECT_EQ(slurp(staged.path() / "metrics.json"), slurp(combined.path() / "metrics.json"));
}

TEST(Batch, RepeatedRunsAreBitwiseIdentical) {
    TempDir data, a, b;
    write_synthetic_category(data.path(), "widget", {4, 2, 2});
    const auto layout = ingest(data.path());
    auto cfg = fast_config(a.path());
    ASSERT_EQ(run_batch(Mode::fewshot, layout, cfg).exit_code(), 0);
    cfg.run.output = b.path();
    cfg.run.workers = 1;
    ASSERT_EQ(run_batch(Mode::fewshot, layout, cfg).exit_code(), 0);
    for (const auto& e : fs::recursive_directory_iterator(a.path() / "widget" / "maps"))
        if (e.path().extension() == ".raw")
            EXPECT_EQ(slurp(e.path()), slurp(b.path() / fs::relative(e.path(), a.path())));
    EXPECT_EQ(slurp(a.path() / "metrics.json"), slurp(b.path() / "metrics.json"));
}

TEST(Batch, TestWithoutBanksFailsTheBatch) {
    TempDir data, out;
    write_synthetic_category(data.path(), "widget", {4, 1, 1});
    const auto rep = run_batch(Mode::test, ingest(data.path()), fast_config(out.path()));
    EXPECT_EQ(rep.exit_code(), 2);
    EXPECT_EQ(rep.failed, 2u);
    const auto errs = nlohmann::json::parse(slurp(out.path() / "errors.json"));
    EXPECT_EQ(errs["status"], "failed");
    EXPECT_EQ(errs["errors"][0]["type"], "LoadError");
}

TEST(Batch, BanksFromOtherProviderAreRejected) {
    TempDir data, out;
    write_synthetic_category(data.path(), "widget", {4, 1, 1});
    const auto layout = ingest(data.path());
    auto cfg = fast_config(out.path());
    ASSERT_EQ(run_batch(Mode::build_bank, layout, cfg).exit_code(), 0);
    cfg.provider.mock_dim = 32;
    const auto rep = run_batch(Mode::test, layout, cfg);
    EXPECT_EQ(rep.exit_code(), 2);
    EXPECT_EQ(rep.errors.at(0).type, "ContractViolation");
}

TEST(Batch, EmptyTestSetIsAnError) {
    TempDir data, out;
    write_synthetic_category(data.path(), "widget", {1, 0, 0});
    const auto rep = run_batch(Mode::zeroshot, ingest(data.path()), fast_config(out.path()));
    EXPECT_EQ(rep.exit_code(), 2);
    EXPECT_NE(rep.fatal.find("empty test set"), std::string::npos);
}

TEST(Batch, PartialFailuresAreRecordedAndMajorityFails) {
    TempDir data, out;
    write_synthetic_category(data.path(), "widget", {0, 2, 2});
    auto layout = ingest(data.path());
    layout.categories[0].tests[0].image = data.path() / "gone.png";
    auto rep = run_batch(Mode::zeroshot, layout, fast_config(out.path()));
    EXPECT_EQ(rep.exit_code(), 1);
    EXPECT_EQ(rep.failed, 1u);
    EXPECT_NE(rep.errors.at(0).message.find("gone.png"), std::string::npos);

    for (int i = 1; i < 3; ++i) layout.categories[0].tests[i].image = data.path() / "gone.png";
    rep = run_batch(Mode::zeroshot, layout, fast_config(out.path()));
    EXPECT_EQ(rep.exit_code(), 2);
}

TEST(Batch, EvalRecomputesMetricsFromOutputs) {
    TempDir data, out;
    write_synthetic_category(data.path(), "widget", {0, 2, 2});
    auto cfg = fast_config(out.path());
    const auto layout = ingest(data.path());
    ASSERT_EQ(run_batch(Mode::zeroshot, layout, cfg).exit_code(), 0);
    const auto first = slurp(out.path() / "metrics.json");
    fs::remove(out.path() / "metrics.json");
    const auto rep = run_batch(Mode::eval, layout, cfg);
    ASSERT_EQ(rep.exit_code(), 0);
    EXPECT_EQ(slurp(out.path() / "metrics.json"), first);
}

TEST(Batch, SingleClassCategoryReportsUndefinedMetric) {
    TempDir data, out;
    write_synthetic_category(data.path(), "widget", {0, 3, 0});
    const auto rep = run_batch(Mode::zeroshot, ingest(data.path()), fast_config(out.path()));
    ASSERT_EQ(rep.exit_code(), 0);
    const auto m = nlohmann::json::parse(slurp(out.path() / "widget" / "metrics.json"));
    EXPECT_TRUE(m["f1_cls"].is_null());
    EXPECT_TRUE(m.contains("undefined_cls"));
}
