#pragma once

#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "msad/image.hpp"

namespace msad::io {

/// Reads any OpenCV-supported image as RGB in [0, 1].
inline ImageTensor read_image(const std::filesystem::path& path) {
    const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw InvalidInput("cannot read image: " + path.string());
    cv::Mat f;
    bgr.convertTo(f, CV_32FC3, bgr.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0);
    ImageTensor img(f.rows, f.cols);
    for (int y = 0; y < f.rows; ++y) {
        const auto* row = f.ptr<cv::Vec3f>(y);
        for (int x = 0; x < f.cols; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][2 - c];
    }
    return img;
}

/// Any nonzero pixel is foreground.
inline BinaryMask read_mask(const std::filesystem::path& path) {
    const cv::Mat g = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (g.empty()) throw InvalidInput("cannot read mask: " + path.string());
    BinaryMask m(g.rows, g.cols);
    for (int y = 0; y < g.rows; ++y)
        for (int x = 0; x < g.cols; ++x) m.at(y, x) = g.at<std::uint8_t>(y, x) != 0;
    return m;
}

inline void write_image(const ImageTensor& img, const std::filesystem::path& path) {
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                bgr.at<cv::Vec3b>(y, x)[2 - c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(img.at(y, x, c), 0.0f, 1.0f) * 255.0f));
    if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image: " + path.string());
}

inline void write_mask(const BinaryMask& m, const std::filesystem::path& path) {
    cv::Mat g(m.height, m.width, CV_8UC1);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) g.at<std::uint8_t>(y, x) = m.at(y, x) ? 255 : 0;
    if (!cv::imwrite(path.string(), g)) throw Error("cannot write mask: " + path.string());
}

}  // namespace msad::io
