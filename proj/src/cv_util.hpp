#pragma once

#include <opencv2/core.hpp>

#include "iconmark/image.hpp"

namespace iconmark {

// RGB raster <-> BGR cv::Mat (OpenCV's native order). Copies.
inline cv::Mat to_mat_bgr(const ImageRaster& img) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            row[x][0] = img.at(x, y, 2);
            row[x][1] = img.at(x, y, 1);
            row[x][2] = img.at(x, y, 0);
        }
    }
    return m;
}

inline ImageRaster from_mat_bgr(const cv::Mat& m) {
    CV_Assert(m.type() == CV_8UC3);
    ImageRaster img;
    img.width = m.cols;
    img.height = m.rows;
    img.data.resize(size_t(m.cols) * m.rows * 3);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            img.at(x, y, 0) = row[x][2];
            img.at(x, y, 1) = row[x][1];
            img.at(x, y, 2) = row[x][0];
        }
    }
    return img;
}

}  // namespace iconmark
