#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "msad/bankio.hpp"
#include "msad/membank.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace msad;
using namespace msad::testing;

namespace {

MemoryBank random_bank(std::mt19937_64& rng, std::size_t n, int dim) {
    MemoryBank b(BankKind::global, Scale::small, dim);
    b.reserve(n);
    for (std::size_t i = 0; i < n; ++i) b.add(random_unit(rng, dim), {0, 0, -1, static_cast<std::uint32_t>(i)});
    b.freeze();
    return b;
}

ImageTensor one_blob_image() {
    ImageTensor img(240, 240, 0.05f);
    fill_disc(img, 120, 120, 50, {0.8f, 0.7f, 0.6f});
    return img;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("msad_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(BuildBanks, CountsForOneReferenceNoAugmentation) {
    const auto prov = make_mock_providers(1, 32);
    BankConfig cfg;
    cfg.augment = AugmentationSpec::none();
    const std::vector<ImageTensor> refs{one_blob_image()};
    const auto set = build_banks(refs, prov, cfg);
    EXPECT_EQ(set.bank(BankKind::global, Scale::small).rows(), 196u);
    EXPECT_EQ(set.bank(BankKind::global, Scale::middle).rows(), 169u);
    EXPECT_EQ(set.bank(BankKind::global, Scale::image).rows(), 225u);
    // One segmented object, so each individual bank holds one canonical crop's worth.
    EXPECT_EQ(set.bank(BankKind::individual, Scale::small).rows(), 196u);
    EXPECT_EQ(set.bank(BankKind::individual, Scale::middle).rows(), 169u);
    EXPECT_EQ(set.bank(BankKind::individual, Scale::image).rows(), 225u);
    for (const auto& b : set.banks) {
        EXPECT_TRUE(b.frozen());
        for (std::size_t r = 0; r < b.rows(); ++r) ASSERT_NEAR(l2_norm(b.row(r)), 1.0, 1e-5);
    }
    EXPECT_EQ(set.bank(BankKind::individual, Scale::small).provenance()[0].object, 0);
    EXPECT_EQ(set.bank(BankKind::global, Scale::small).provenance()[0].object, -1);
    EXPECT_EQ(set.descriptor.name, prov.image->descriptor().name);
}

TEST(BuildBanks, HorizontalFlipDoublesEveryBank) {
    const auto prov = make_mock_providers(2, 32);
    BankConfig none, flip;
    none.augment = AugmentationSpec::none();
    flip.augment = AugmentationSpec::none();
    flip.augment.h_flip = true;
    const std::vector<ImageTensor> refs{one_blob_image()};
    const auto a = build_banks(refs, prov, none), b = build_banks(refs, prov, flip);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(b.banks[i].rows(), 2 * a.banks[i].rows());
}

TEST(BuildBanks, BlankImageFallsBackToWholeImageCrop) {
    const auto prov = make_mock_providers(3, 32);
    BankConfig cfg;
    cfg.augment = AugmentationSpec::none();
    const std::vector<ImageTensor> refs{ImageTensor(240, 240, 0.0f)};
    const auto set = build_banks(refs, prov, cfg);
    EXPECT_EQ(set.bank(BankKind::individual, Scale::small).rows(), 196u);
    EXPECT_EQ(set.bank(BankKind::individual, Scale::image).rows(), 225u);
}

TEST(BuildBanks, CapacityBoundsEveryBankAndBuildIsDeterministic) {
    const auto prov = make_mock_providers(4, 16);
    BankConfig cfg;  // default augmentation: 9 variants
    cfg.capacity = 300;
    cfg.seed = 5;
    cfg.workers = 3;
    const std::vector<ImageTensor> refs{one_blob_image(), one_blob_image()};
    const auto a = build_banks(refs, prov, cfg);
    for (const auto& b : a.banks) EXPECT_LE(b.rows(), 300u);
    const auto b = build_banks(refs, prov, cfg);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_TRUE(std::ranges::equal(a.banks[i].matrix(), b.banks[i].matrix()));
        EXPECT_EQ(a.banks[i].provenance(), b.banks[i].provenance());
    }
}

TEST(BuildBanks, Errors) {
    const auto prov = make_mock_providers(4, 16);
    EXPECT_THROW(build_banks(std::span<const ImageTensor>{}, prov), InvalidInput);
    BankConfig cfg;
    cfg.augment.rotations = {30.0};
    const std::vector<ImageTensor> refs{one_blob_image()};
    EXPECT_THROW(build_banks(refs, prov, cfg), InvalidConfig);
}

TEST(Bank, AddContract) {
    MemoryBank b(BankKind::global, Scale::small, 3);
    EXPECT_THROW(b.add(Embedding{{1.0f, 1.0f, 0.0f}}, {}), ContractViolation);
    EXPECT_THROW(b.add(Embedding{{1.0f, 0.0f}}, {}), ContractViolation);
    b.add(Embedding{{1.0f, 0.0f, 0.0f}}, {});
    b.freeze();
    EXPECT_THROW(b.add(Embedding{{0.0f, 1.0f, 0.0f}}, {}), ContractViolation);
}

TEST(Subsample, SmallBankUnchanged) {
    std::mt19937_64 rng(31);
    const auto b = random_bank(rng, 500, 8);
    const auto s = subsample(b, kDefaultBankCapacity, 7);
    EXPECT_TRUE(std::ranges::equal(b.matrix(), s.matrix()));
    EXPECT_EQ(b.provenance(), s.provenance());
    EXPECT_THROW(subsample(b, 0, 1), InvalidConfig);
}

TEST(Subsample, CapsLargeBankWithDistinctRows) {
    std::mt19937_64 rng(32);
    const auto b = random_bank(rng, 200'000, 4);
    const auto s = subsample(b, kDefaultBankCapacity, 9);
    ASSERT_EQ(s.rows(), 100'000u);
    std::set<std::uint32_t> ids;
    for (std::size_t r = 0; r < s.rows(); ++r) {
        const auto w = s.provenance()[r].window;
        ids.insert(w);
        ASSERT_TRUE(std::ranges::equal(s.row(r), b.row(w)));
        if (r) ASSERT_LT(s.provenance()[r - 1].window, w);
    }
    EXPECT_EQ(ids.size(), 100'000u);
    const auto again = subsample(b, kDefaultBankCapacity, 9);
    EXPECT_EQ(again.provenance(), s.provenance());
    EXPECT_NE(subsample(b, kDefaultBankCapacity, 10).provenance(), s.provenance());
}

TEST(Query, SelfAndOrthogonal) {
    std::mt19937_64 rng(33);
    const auto b = random_bank(rng, 50, 16);
    for (std::size_t r = 0; r < b.rows(); ++r) {
        const Embedding e{std::vector<float>(b.row(r).begin(), b.row(r).end())};
        const auto q = query(b, e);
        EXPECT_LE(q.distance, 1e-6);
        EXPECT_EQ(q.nearest_row, r);
    }
    const auto ortho = MemoryBank::from_rows(BankKind::global, Scale::small, 3, {1, 0, 0, 0, 1, 0}, {{}, {}});
    const auto q = query(ortho, Embedding{{0.0f, 0.0f, 1.0f}});
    EXPECT_EQ(q.distance, 0.5);
    EXPECT_EQ(q.nearest_row, 0u);
    EXPECT_THROW(query(ortho, Embedding{{1.0f, 0.0f}}), ContractViolation);
    EXPECT_THROW(query(MemoryBank(BankKind::global, Scale::small, 3), Embedding{{1.0f, 0.0f, 0.0f}}),
                 ContractViolation);
}

TEST(Query, MatchesNaiveScan) {
    std::mt19937_64 rng(34);
    const auto b = random_bank(rng, 10'000, 64);
    std::vector<Embedding> qs;
    for (int i = 0; i < 100; ++i) qs.push_back(random_unit(rng, 64));
    const auto got = query_many(b, qs);
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto want = naive_query(b, qs[i]);
        EXPECT_NEAR(got[i].distance, want.distance, 1e-6);
        EXPECT_GE(got[i].distance, 0.0);
        EXPECT_LE(got[i].distance, 1.0);
        // The reported row attains the reported distance.
        double d = 0.0;
        for (int k = 0; k < 64; ++k) d += static_cast<double>(b.row(got[i].nearest_row)[k]) * qs[i].values[k];
        EXPECT_NEAR((1.0 - d) / 2.0, got[i].distance, 1e-6);
    }
}

TEST(Query, FirstRowWinsTies) {
    const auto b = MemoryBank::from_rows(BankKind::global, Scale::small, 2, {0, 1, 1, 0, 1, 0}, {{}, {}, {}});
    EXPECT_EQ(query(b, Embedding{{1.0f, 0.0f}}).nearest_row, 1u);
}

TEST(Query, SubsetCanOnlyIncreaseDistance) {
    std::mt19937_64 rng(35);
    for (int trial = 0; trial < 20; ++trial) {
        const auto b = random_bank(rng, 300, 8);
        const auto sub = subsample(b, 100, static_cast<std::uint64_t>(trial));
        std::vector<Embedding> qs;
        for (int i = 0; i < 30; ++i) qs.push_back(random_unit(rng, 8));
        const auto full = query_many(b, qs), part = query_many(sub, qs);
        for (std::size_t i = 0; i < qs.size(); ++i) EXPECT_GE(part[i].distance, full[i].distance);
    }
}

class BankFile : public ::testing::Test {
protected:
    void SetUp() override {
        const auto prov = make_mock_providers(6, 16);
        BankConfig cfg;
        cfg.augment = AugmentationSpec::none();
        cfg.augment.v_flip = true;
        const std::vector<ImageTensor> refs{one_blob_image()};
        set = build_banks(refs, prov, cfg);
        set.config_hash = "abc123";
        path = temp_file("banks.msmb");
    }
    void TearDown() override { std::filesystem::remove(path); }

    BankSet set;
    std::filesystem::path path;
};

TEST_F(BankFile, RoundTripIsBitwise) {
    save_banks(set, path);
    const auto loaded = load_banks(path, &set.descriptor);
    EXPECT_EQ(loaded.config_hash, "abc123");
    EXPECT_EQ(loaded.descriptor.name, set.descriptor.name);
    for (std::size_t i = 0; i < 6; ++i) {
        const auto& a = set.banks[i].matrix();
        const auto& b = loaded.banks[i].matrix();
        ASSERT_EQ(a.size(), b.size());
        EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
        EXPECT_EQ(set.banks[i].provenance(), loaded.banks[i].provenance());
        EXPECT_TRUE(loaded.banks[i].frozen());
    }
}

TEST_F(BankFile, TruncatedOrCorruptFileFails) {
    auto bytes = serialize_banks(set);
    for (std::size_t keep : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
        EXPECT_THROW(deserialize_banks(cut), LoadError);
    }
    bytes[bytes.size() / 3] ^= 0x40;
    EXPECT_THROW(deserialize_banks(bytes), LoadError);
    EXPECT_THROW(load_banks(temp_file("does_not_exist")), LoadError);
}

TEST_F(BankFile, VersionMismatchFails) {
    auto bytes = serialize_banks(set);
    bytes[4] = 9;  // version low byte
    const std::size_t n = bytes.size() - 4;
    const auto crc = detail::crc32_of(bytes.data(), n);
    for (int i = 0; i < 4; ++i) bytes[n + i] = static_cast<std::uint8_t>(crc >> (8 * i));
    EXPECT_THROW(deserialize_banks(bytes), LoadError);
}

TEST_F(BankFile, ProviderMismatchIsContractViolation) {
    save_banks(set, path);
    ProviderDescriptor other = set.descriptor;
    other.dim = 32;
    EXPECT_THROW(load_banks(path, &other), ContractViolation);
    other = set.descriptor;
    other.name = "something-else";
    EXPECT_THROW(load_banks(path, &other), ContractViolation);
}

TEST_F(BankFile, LoaderRenormalizesDriftedRows) {
    std::vector<float> data{0.6f, 0.8f, 0.0f, 0.0f, 3.0f, 0.0f, 0.0f, 0.0f};
    BankSet s;
    s.descriptor = {"x", 4, 16, true};
    for (BankKind k : {BankKind::global, BankKind::individual})
        for (Scale sc : kAllScales)
            s.bank(k, sc) = MemoryBank::from_rows(k, sc, 4, data, {{}, {}});
    const auto loaded = deserialize_banks(serialize_banks(s));
    const auto r = loaded.banks[0].row(1);
    EXPECT_FLOAT_EQ(r[0], 1.0f);
}
