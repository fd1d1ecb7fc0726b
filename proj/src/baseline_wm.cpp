#include "iconmark/baseline_wm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "iconmark/rng.hpp"

namespace iconmark {

namespace {

using Eigen::Matrix4d;
using Eigen::MatrixXd;

constexpr int kBlock = 4;

// Orthonormal 4x4 DCT-II matrix.
Matrix4d dct4_matrix() {
    Matrix4d c;
    for (int k = 0; k < 4; ++k) {
        const double alpha = k == 0 ? 0.5 : std::sqrt(0.5);
        for (int n = 0; n < 4; ++n)
            c(k, n) = alpha * std::cos(M_PI * (2 * n + 1) * k / 8.0);
    }
    return c;
}

const Matrix4d kDct = dct4_matrix();

struct LumaPlanes {
    MatrixXd y;       // original luma, [0,255] real-valued
    MatrixXd ll, lh, hl, hh;
    int pad_w = 0, pad_h = 0;  // even-padded luma dims
};

MatrixXd luma_plane(const ImageRaster& img) {
    MatrixXd y(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            y(r, c) = luma601(img.at(c, r, 0), img.at(c, r, 1), img.at(c, r, 2));
    return y;
}

// Replicate-pad to even dimensions, then 1-level orthonormal Haar.
LumaPlanes forward_dwt(const ImageRaster& img) {
    LumaPlanes p;
    p.y = luma_plane(img);
    p.pad_h = img.height + (img.height % 2);
    p.pad_w = img.width + (img.width % 2);
    MatrixXd y = MatrixXd::Zero(p.pad_h, p.pad_w);
    y.topLeftCorner(img.height, img.width) = p.y;
    if (p.pad_h > img.height) y.row(p.pad_h - 1) = y.row(img.height - 1);
    if (p.pad_w > img.width) y.col(p.pad_w - 1) = y.col(img.width - 1);

    const int hh = p.pad_h / 2, hw = p.pad_w / 2;
    p.ll.resize(hh, hw);
    p.lh.resize(hh, hw);
    p.hl.resize(hh, hw);
    p.hh.resize(hh, hw);
    for (int r = 0; r < hh; ++r)
        for (int c = 0; c < hw; ++c) {
            const double a = y(2 * r, 2 * c), b = y(2 * r, 2 * c + 1);
            const double d = y(2 * r + 1, 2 * c), e = y(2 * r + 1, 2 * c + 1);
            p.ll(r, c) = (a + b + d + e) / 2.0;
            p.hl(r, c) = (a - b + d - e) / 2.0;
            p.lh(r, c) = (a + b - d - e) / 2.0;
            p.hh(r, c) = (a - b - d + e) / 2.0;
        }
    return p;
}

MatrixXd inverse_dwt(const LumaPlanes& p, int out_h, int out_w) {
    MatrixXd y(p.pad_h, p.pad_w);
    const int hh = p.pad_h / 2, hw = p.pad_w / 2;
    for (int r = 0; r < hh; ++r)
        for (int c = 0; c < hw; ++c) {
            const double ll = p.ll(r, c), hl = p.hl(r, c), lh = p.lh(r, c), hhc = p.hh(r, c);
            y(2 * r, 2 * c) = (ll + hl + lh + hhc) / 2.0;
            y(2 * r, 2 * c + 1) = (ll - hl + lh - hhc) / 2.0;
            y(2 * r + 1, 2 * c) = (ll + hl - lh - hhc) / 2.0;
            y(2 * r + 1, 2 * c + 1) = (ll - hl - lh + hhc) / 2.0;
        }
    return y.topLeftCorner(out_h, out_w);
}

// LL padded (replicate) to block-multiple dims; returns grid size.
MatrixXd pad_to_blocks(const MatrixXd& ll, int block) {
    const int bh = int((ll.rows() + block - 1) / block) * block;
    const int bw = int((ll.cols() + block - 1) / block) * block;
    MatrixXd out = MatrixXd::Zero(bh, bw);
    out.topLeftCorner(ll.rows(), ll.cols()) = ll;
    for (int r = int(ll.rows()); r < bh; ++r) out.row(r) = out.row(int(ll.rows()) - 1);
    for (int c = int(ll.cols()); c < bw; ++c) out.col(c) = out.col(int(ll.cols()) - 1);
    return out;
}

void validate_params(const ImageRaster& img, const EmbedParams& params) {
    check_raster(img);
    if (img.width < 64 || img.height < 64)
        throw std::invalid_argument("watermark embedding requires images >= 64x64");
    if (!(params.step > 0.0)) throw std::invalid_argument("quantization step must be > 0");
    if (params.block != kBlock) throw std::invalid_argument("block size must be 4");
    if (params.dwt_levels != 1) throw std::invalid_argument("dwt_levels must be 1");
    const int blocks = ((img.height + 1) / 2 + kBlock - 1) / kBlock *
                       (((img.width + 1) / 2 + kBlock - 1) / kBlock);
    if (size_t(blocks) < kKeyBits)
        throw std::invalid_argument(
            "image too small to hold one full key tiling: " + std::to_string(blocks) +
            " LL blocks available, " + std::to_string(kKeyBits) + " required");
}

// Nearest lattice point of {(2m+bit)*step, m >= 0}.
double qim_snap(double sigma, double step, int bit) {
    long m = std::lround((sigma / step - bit) / 2.0);
    if (m < 0) m = 0;
    return (2.0 * double(m) + bit) * step;
}

int qim_decode(double sigma, double step) {
    const double d0 = std::abs(sigma - qim_snap(sigma, step, 0));
    const double d1 = std::abs(sigma - qim_snap(sigma, step, 1));
    return d1 < d0 ? 1 : 0;
}

}  // namespace

WatermarkKey WatermarkKey::from_seed(std::uint64_t seed) {
    Rng rng(hash64({seed, hash64_str("watermark-key")}));
    WatermarkKey k;
    k.bits.resize(kKeyBits);
    for (auto& b : k.bits) b = std::uint8_t(rng.bits() & 1);
    return k;
}

WatermarkKey WatermarkKey::from_hex(const std::string& hex25) {
    if (hex25.size() != kKeyBits / 4)
        throw std::invalid_argument("key hex must be exactly 25 characters (100 bits)");
    WatermarkKey k;
    k.bits.reserve(kKeyBits);
    for (char c : hex25) {
        int v;
        if (c >= '0' && c <= '9') v = c - '0';
        else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
        else throw std::invalid_argument("invalid hex character in key");
        for (int j = 3; j >= 0; --j) k.bits.push_back(std::uint8_t((v >> j) & 1));
    }
    return k;
}

std::string WatermarkKey::to_hex() const {
    if (bits.size() != kKeyBits) throw std::invalid_argument("key must have 100 bits");
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(kKeyBits / 4);
    for (size_t i = 0; i < kKeyBits; i += 4) {
        const int v = (bits[i] << 3) | (bits[i + 1] << 2) | (bits[i + 2] << 1) | bits[i + 3];
        out.push_back(digits[v]);
    }
    return out;
}

ImageRaster embed_bits(const ImageRaster& image, const WatermarkKey& key,
                       const EmbedParams& params) {
    validate_params(image, params);
    if (key.bits.size() != kKeyBits) throw std::invalid_argument("key must have 100 bits");
    for (auto b : key.bits)
        if (b > 1) throw std::invalid_argument("key bits must be 0/1");

    LumaPlanes planes = forward_dwt(image);
    const int ll_h = int(planes.ll.rows()), ll_w = int(planes.ll.cols());
    MatrixXd ll = pad_to_blocks(planes.ll, kBlock);
    const int grid_w = int(ll.cols()) / kBlock;
    const int grid_h = int(ll.rows()) / kBlock;

    Eigen::JacobiSVD<Matrix4d> svd;
    for (int gr = 0; gr < grid_h; ++gr)
        for (int gc = 0; gc < grid_w; ++gc) {
            const int bit = key.bits[size_t(gr * grid_w + gc) % kKeyBits];
            Matrix4d blockm = ll.block<kBlock, kBlock>(gr * kBlock, gc * kBlock);
            const Matrix4d coef = kDct * blockm * kDct.transpose();
            svd.compute(coef, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Eigen::Vector4d sv = svd.singularValues();
            double snapped = qim_snap(sv(0), params.step, bit);
            // Keep the modulated value the largest singular value so the
            // decoder reads the same cell (next lattice point up if needed).
            if (snapped < sv(1) + params.step / 2.0) snapped += 2.0 * params.step;
            sv(0) = snapped;
            const Matrix4d modulated =
                svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
            ll.block<kBlock, kBlock>(gr * kBlock, gc * kBlock) =
                kDct.transpose() * modulated * kDct;
        }

    planes.ll = ll.topLeftCorner(ll_h, ll_w);
    const MatrixXd new_y = inverse_dwt(planes, image.height, image.width);

    ImageRaster out = image;
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c) {
            const double delta = new_y(r, c) - planes.y(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::round(double(image.at(c, r, ch)) + delta);
                out.at(c, r, ch) = std::uint8_t(std::clamp(v, 0.0, 255.0));
            }
        }
    return out;
}

std::vector<std::uint8_t> extract_bits(const ImageRaster& image, const EmbedParams& params) {
    validate_params(image, params);
    const LumaPlanes planes = forward_dwt(image);
    const MatrixXd ll = pad_to_blocks(planes.ll, kBlock);
    const int grid_w = int(ll.cols()) / kBlock;
    const int grid_h = int(ll.rows()) / kBlock;

    std::vector<int> votes_one(kKeyBits, 0), votes_total(kKeyBits, 0);
    Eigen::JacobiSVD<Matrix4d> svd;
    for (int gr = 0; gr < grid_h; ++gr)
        for (int gc = 0; gc < grid_w; ++gc) {
            const size_t pos = size_t(gr * grid_w + gc) % kKeyBits;
            const Matrix4d blockm = ll.block<kBlock, kBlock>(gr * kBlock, gc * kBlock);
            const Matrix4d coef = kDct * blockm * kDct.transpose();
            svd.compute(coef);
            votes_one[pos] += qim_decode(svd.singularValues()(0), params.step);
            votes_total[pos] += 1;
        }

    std::vector<std::uint8_t> bits(kKeyBits, 0);
    for (size_t i = 0; i < kKeyBits; ++i)
        bits[i] = std::uint8_t(2 * votes_one[i] > votes_total[i] ? 1 : 0);
    return bits;
}

double bit_score(const std::vector<std::uint8_t>& extracted, const WatermarkKey& key) {
    if (extracted.size() != key.bits.size())
        throw std::invalid_argument("bit_score: length mismatch");
    if (extracted.empty()) throw std::invalid_argument("bit_score: empty vectors");
    size_t match = 0;
    for (size_t i = 0; i < extracted.size(); ++i)
        if ((extracted[i] != 0) == (key.bits[i] != 0)) ++match;
    return double(match) / double(extracted.size());
}

}  // namespace iconmark
