#pragma once

// Score map export: <stem>.raw (little-endian float32, row-major), <stem>.json header,
// and <stem>.png (8-bit grayscale, min-max normalized per map).

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "json.hpp"

#include "msad/image.hpp"

namespace msad::io {

struct MapHeader {
    int height = 0;
    int width = 0;
    double min = 0.0;
    double max = 0.0;
    std::string config_hash;
};

inline void export_map(const ScoreMap& map, const std::filesystem::path& stem, const std::string& config_hash) {
    if (map.values.size() != static_cast<std::size_t>(map.height) * map.width || map.values.empty())
        throw InvalidInput("cannot export an empty or malformed score map");
    double lo = map.values[0], hi = map.values[0];
    for (double v : map.values) {
        if (!std::isfinite(v)) throw InvalidInput("score map contains NaN or infinity; refusing to export " + stem.string());
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    std::vector<char> raw(map.values.size() * 4);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(map.values[i]));
        for (int b = 0; b < 4; ++b) raw[i * 4 + b] = static_cast<char>(u >> (8 * b));
    }
    auto raw_path = stem;
    raw_path += ".raw";
    std::ofstream(raw_path, std::ios::binary).write(raw.data(), static_cast<std::streamsize>(raw.size()));

    const nlohmann::json header = {{"shape", {map.height, map.width}}, {"dtype", "float32"}, {"byte_order", "little"},
                                   {"min", lo}, {"max", hi}, {"config_hash", config_hash}};
    auto json_path = stem;
    json_path += ".json";
    std::ofstream(json_path) << header.dump(2) << '\n';

    cv::Mat g(map.height, map.width, CV_8UC1);
    const double span = hi - lo;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            g.at<std::uint8_t>(y, x) =
                span > 0.0 ? static_cast<std::uint8_t>(std::lround((map.at(y, x) - lo) / span * 255.0)) : 0;
    auto png_path = stem;
    png_path += ".png";
    if (!cv::imwrite(png_path.string(), g)) throw Error("cannot write heatmap " + png_path.string());
}

inline MapHeader read_map_header(const std::filesystem::path& stem) {
    auto json_path = stem;
    json_path += ".json";
    std::ifstream f(json_path);
    if (!f) throw LoadError("missing map header " + json_path.string());
    try {
        const auto j = nlohmann::json::parse(f);
        return {j.at("shape").at(0).get<int>(), j.at("shape").at(1).get<int>(), j.at("min").get<double>(),
                j.at("max").get<double>(), j.value("config_hash", std::string{})};
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("bad map header " + json_path.string() + ": " + e.what());
    }
}

/// Reads <stem>.raw using the shape from <stem>.json.
inline ScoreMap read_map(const std::filesystem::path& stem) {
    const auto h = read_map_header(stem);
    auto raw_path = stem;
    raw_path += ".raw";
    std::ifstream f(raw_path, std::ios::binary);
    if (!f) throw LoadError("missing raw map " + raw_path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const std::size_t n = static_cast<std::size_t>(h.height) * h.width;
    if (raw.size() != n * 4) throw LoadError("raw map size does not match header: " + raw_path.string());
    ScoreMap m(h.height, h.width);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + b])) << (8 * b);
        m.values[i] = std::bit_cast<float>(u);
    }
    return m;
}

}  // namespace msad::io
