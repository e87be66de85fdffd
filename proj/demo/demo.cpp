// Offline walkthrough with mock providers on generated images.
//
//   msad-demo                 score a few generated images, zero-shot and few-shot
//   msad-demo --write DIR     also write them as an MVTec-style tree under DIR/tile
//                             (usable with `msad-cli ... --data DIR --mock-providers 0`)

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "msad/fewshot.hpp"
#include "msad/mock_providers.hpp"
#include "msad/zeroshot.hpp"
#include "msad/io/image_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Scene {
    msad::ImageTensor image;
    msad::BinaryMask defect;
};

// A striped ceramic tile on a dark table; anomalous tiles carry a dark scratch.
Scene make_tile(std::uint64_t seed, bool scratched) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<float> noise(0.0f, 0.015f);
    const int n = 240;
    Scene s{msad::ImageTensor(n, n), msad::BinaryMask(n, n)};
    const int x0 = 50 + static_cast<int>(u(rng) * 10), y0 = 50 + static_cast<int>(u(rng) * 10);
    const int side = 130;
    const double sy = y0 + 20 + u(rng) * 80, sx = x0 + 20 + u(rng) * 60, len = 40, ang = u(rng) * 3.14159;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            float rgb[3] = {0.06f, 0.06f, 0.07f};
            if (y >= y0 && y < y0 + side && x >= x0 && x < x0 + side) {
                const float stripe = 0.05f * static_cast<float>(std::sin((x - x0) * 0.4));
                rgb[0] = 0.80f + stripe;
                rgb[1] = 0.78f + stripe;
                rgb[2] = 0.70f;
                if (scratched) {
                    const double t = std::clamp((x - sx) * std::cos(ang) + (y - sy) * std::sin(ang), 0.0, len);
                    const double dx = x - (sx + t * std::cos(ang)), dy = y - (sy + t * std::sin(ang));
                    if (dx * dx + dy * dy < 64.0) {
                        rgb[0] = 0.30f;
                        rgb[1] = 0.12f;
                        rgb[2] = 0.10f;
                        s.defect.at(y, x) = 1;
                    }
                }
            }
            for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = std::clamp(rgb[c] + noise(rng), 0.0f, 1.0f);
        }
    return s;
}

void write_tree(const fs::path& root) {
    const fs::path d = root / "tile";
    for (const char* sub : {"train/good", "test/good", "test/scratch", "ground_truth/scratch"}) fs::create_directories(d / sub);
    char name[32];
    for (int i = 0; i < 6; ++i) {
        std::snprintf(name, sizeof name, "%03d.png", i);
        msad::io::write_image(make_tile(100 + i, false).image, d / "train/good" / name);
    }
    for (int i = 0; i < 4; ++i) {
        std::snprintf(name, sizeof name, "%03d.png", i);
        msad::io::write_image(make_tile(200 + i, false).image, d / "test/good" / name);
        const auto s = make_tile(300 + i, true);
        msad::io::write_image(s.image, d / "test/scratch" / name);
        std::snprintf(name, sizeof name, "%03d_mask.png", i);
        msad::io::write_mask(s.defect, d / "ground_truth/scratch" / name);
    }
    std::printf("wrote %s\n", d.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    if (argc == 3 && std::string(argv[1]) == "--write") write_tree(argv[2]);
    else if (argc != 1) {
        std::fprintf(stderr, "usage: %s [--write DIR]\n", argv[0]);
        return 2;
    }

    const auto prov = msad::make_mock_providers(0);
    const auto pair = msad::embed_text(*prov.text, "tile");

    std::vector<msad::ImageTensor> refs;
    for (int i = 0; i < 4; ++i) refs.push_back(make_tile(100 + i, false).image);
    msad::BankConfig bcfg;
    bcfg.workers = 4;
    const auto banks = msad::build_banks(refs, prov, bcfg);
    std::printf("banks: global %zu/%zu/%zu rows, individual %zu/%zu/%zu rows\n",
                banks.bank(msad::BankKind::global, msad::Scale::small).rows(),
                banks.bank(msad::BankKind::global, msad::Scale::middle).rows(),
                banks.bank(msad::BankKind::global, msad::Scale::image).rows(),
                banks.bank(msad::BankKind::individual, msad::Scale::small).rows(),
                banks.bank(msad::BankKind::individual, msad::Scale::middle).rows(),
                banks.bank(msad::BankKind::individual, msad::Scale::image).rows());

    msad::ZeroShotConfig zcfg;
    zcfg.workers = 4;
    msad::FewShotConfig fcfg;
    fcfg.workers = 4;
    std::printf("%-10s %12s %12s   %s\n", "image", "zero-shot", "few-shot", "hottest few-shot pixel");
    for (int i = 0; i < 3; ++i)
        for (bool bad : {false, true}) {
            const auto s = make_tile(400 + i, bad);
            const auto z = msad::run_zero_shot(s.image, pair, prov, zcfg);
            const auto f = msad::run_few_shot(s.image, banks, pair, prov, fcfg);
            const auto [y, x] = msad::argmax_pixel(f.map);
            double dist = 1e9;
            for (int yy = 0; yy < s.defect.height; ++yy)
                for (int xx = 0; xx < s.defect.width; ++xx)
                    if (s.defect.at(yy, xx)) dist = std::min(dist, std::hypot(yy - y, xx - x));
            std::printf("%-10s %12.4f %12.4f   (%d,%d)", (std::string(bad ? "scratch" : "good") + std::to_string(i)).c_str(),
                        z.image_score, f.image_score, y, x);
            if (bad) std::printf(" %.0f px from the scratch", dist);
            std::printf("\n");
        }
    return 0;
}
