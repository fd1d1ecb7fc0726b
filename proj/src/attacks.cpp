#include "iconmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include "cv_util.hpp"
#include "iconmark/rng.hpp"
#include "iconmark/sha256.hpp"

namespace iconmark {

namespace {

// Draws in a fixed order; overrides replace drawn values after the draw so
// the stream layout never depends on which overrides are present.
class ParamDraw {
public:
    ParamDraw(Rng& rng, const AttackOverrides& overrides, std::map<std::string, double>& out)
        : rng_(rng), overrides_(overrides), out_(out) {}

    double uniform(const std::string& name, double lo, double hi) {
        double v = rng_.uniform(lo, hi);
        v = maybe_override(name, v, lo, hi);
        out_[name] = v;
        return v;
    }

    int uniform_int(const std::string& name, int lo, int hi) {
        double v = double(rng_.uniform_int(lo, hi));
        v = maybe_override(name, v, lo, hi);
        if (v != std::floor(v))
            throw std::invalid_argument("override '" + name + "' must be an integer");
        out_[name] = v;
        return int(v);
    }

    bool already_used(const std::string& name) const { return used_.count(name) > 0; }

    void check_all_consumed() const {
        for (const auto& [k, v] : overrides_)
            if (!used_.count(k))
                throw std::invalid_argument("unknown attack parameter override '" + k + "'");
    }

    double maybe_override(const std::string& name, double drawn, double lo, double hi) {
        used_.insert(name);
        const auto it = overrides_.find(name);
        if (it == overrides_.end()) return drawn;
        if (it->second < lo || it->second > hi)
            throw std::invalid_argument("override '" + name + "' = " +
                                        std::to_string(it->second) + " outside [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return it->second;
    }

private:
    Rng& rng_;
    const AttackOverrides& overrides_;
    std::map<std::string, double>& out_;
    std::set<std::string> used_;
};

void require_min_size(const ImageRaster& img, int min_dim, const char* family) {
    check_raster(img);
    if (img.width < min_dim || img.height < min_dim)
        throw std::invalid_argument(std::string(family) + " attack requires images >= " +
                                    std::to_string(min_dim) + "x" + std::to_string(min_dim));
}

std::uint64_t family_stream_seed(std::uint64_t seed, const char* family) {
    return hash64({seed, hash64_str(std::string("attack-") + family)});
}

void add_gaussian_noise(ImageRaster& img, double sigma01, std::uint64_t noise_seed) {
    Rng rng(noise_seed);
    for (auto& v : img.data) {
        const double noisy = std::round(double(v) + rng.gauss(0.0, sigma01 * 255.0));
        v = std::uint8_t(std::clamp(noisy, 0.0, 255.0));
    }
}

}  // namespace

AttackFamily parse_attack_family(const std::string& name) {
    if (name == "affine") return AttackFamily::affine;
    if (name == "valuemetric") return AttackFamily::valuemetric;
    if (name == "warp") return AttackFamily::warp;
    if (name == "regen") return AttackFamily::regen;
    throw std::invalid_argument("unknown attack family '" + name +
                                "' (expected affine|valuemetric|warp|regen)");
}

std::string attack_family_name(AttackFamily f) {
    switch (f) {
        case AttackFamily::affine: return "affine";
        case AttackFamily::valuemetric: return "valuemetric";
        case AttackFamily::warp: return "warp";
        case AttackFamily::regen: return "regen";
    }
    throw std::logic_error("bad attack family");
}

std::string AttackMetadata::to_json() const {
    nlohmann::json j;
    j["family"] = family;
    j["seed"] = seed;
    j["params"] = params;
    j["proxy"] = proxy;
    j["fill"] = fill;
    return j.dump(2) + "\n";
}

ImageRaster apply_affine(const ImageRaster& image, std::uint64_t seed,
                         const AttackOverrides& overrides, AttackMetadata* meta) {
    require_min_size(image, 64, "affine");
    Rng rng(family_stream_seed(seed, "affine"));
    std::map<std::string, double> params;
    ParamDraw draw(rng, overrides, params);
    const double rotation = draw.uniform("rotation_deg", -20.0, 20.0);
    const double area = draw.uniform("area", 0.70, 0.95);
    const double cx = draw.uniform("cx", 0.0, 1.0);
    const double cy = draw.uniform("cy", 0.0, 1.0);
    draw.check_all_consumed();

    const int w = image.width, h = image.height;
    cv::Mat m = to_mat_bgr(image);
    if (rotation != 0.0) {
        const cv::Mat rot = cv::getRotationMatrix2D(
            cv::Point2f(float(w - 1) / 2.0f, float(h - 1) / 2.0f), rotation, 1.0);
        cv::Mat rotated;
        cv::warpAffine(m, rotated, rot, m.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                       cv::Scalar(0, 0, 0));
        m = rotated;
    }
    const double scale = std::sqrt(area);
    const int cw = std::max(1, int(std::lround(w * scale)));
    const int ch = std::max(1, int(std::lround(h * scale)));
    const int x0 = int(std::lround(cx * (w - cw)));
    const int y0 = int(std::lround(cy * (h - ch)));
    cv::Mat cropped = m(cv::Rect(x0, y0, cw, ch)).clone();
    cv::Mat resized;
    cv::resize(cropped, resized, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);

    ImageRaster out = from_mat_bgr(resized);
    out.scene = image.scene;
    if (meta) {
        meta->family = "affine";
        meta->seed = seed;
        meta->params = params;
        meta->proxy = false;
    }
    return out;
}

ImageRaster apply_valuemetric(const ImageRaster& image, std::uint64_t seed,
                              const AttackOverrides& overrides, AttackMetadata* meta) {
    require_min_size(image, 16, "valuemetric");
    Rng rng(family_stream_seed(seed, "valuemetric"));
    std::map<std::string, double> params;
    ParamDraw draw(rng, overrides, params);

    // Inclusion flags, redrawn as a group until at least one perturbation is
    // on; overrides are applied to the final group only.
    const char* flag_names[5] = {"include_brightness", "include_contrast", "include_blur",
                                 "include_noise", "include_jpeg"};
    bool include[5] = {};
    for (;;) {
        bool any = false;
        for (bool& f : include) {
            f = (rng.bits() & 1) != 0;
            any = any || f;
        }
        if (any) break;
    }
    bool any_final = false;
    for (int i = 0; i < 5; ++i) {
        const double v = draw.maybe_override(flag_names[i], include[i] ? 1.0 : 0.0, 0.0, 1.0);
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument(std::string("override '") + flag_names[i] +
                                        "' must be 0 or 1");
        include[i] = v != 0.0;
        params[flag_names[i]] = v;
        any_final = any_final || include[i];
    }
    if (!any_final)
        throw std::invalid_argument("valuemetric overrides disabled every perturbation");

    // All five parameters are drawn in fixed order regardless of inclusion so
    // the stream position of each is stable.
    const double brightness = draw.uniform("brightness", 1.4, 1.7);
    const double contrast = draw.uniform("contrast", 1.4, 1.7);
    const double blur_radius = draw.uniform("blur_radius", 1.0, 3.0);
    const double noise_sigma = draw.uniform("noise_sigma", 0.05, 0.15);
    const int jpeg_quality = draw.uniform_int("jpeg_quality", 40, 70);
    draw.check_all_consumed();

    ImageRaster out = image;
    if (include[0]) {
        for (auto& v : out.data)
            v = std::uint8_t(std::clamp(std::round(double(v) * brightness), 0.0, 255.0));
    }
    if (include[1]) {
        double mean = 0.0;
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                mean += luma601(out.at(x, y, 0), out.at(x, y, 1), out.at(x, y, 2));
        mean /= double(out.width) * double(out.height);
        for (auto& v : out.data)
            v = std::uint8_t(
                std::clamp(std::round(mean + contrast * (double(v) - mean)), 0.0, 255.0));
    }
    if (include[2]) {
        cv::Mat blurred;
        cv::GaussianBlur(to_mat_bgr(out), blurred, cv::Size(0, 0), blur_radius);
        const auto scene = out.scene;
        out = from_mat_bgr(blurred);
        out.scene = scene;
    }
    if (include[3]) {
        add_gaussian_noise(out, noise_sigma, hash64({seed, hash64_str("vm-noise")}));
    }
    if (include[4]) {
        const auto scene = out.scene;
        out = decode_jpeg(encode_jpeg(out, jpeg_quality));
        out.scene = scene;
    }
    out.scene = image.scene;
    if (meta) {
        meta->family = "valuemetric";
        meta->seed = seed;
        meta->params = params;
        meta->proxy = false;
    }
    return out;
}

std::array<double, 9> perspective_from_corners(
    int width, int height, const std::array<std::array<double, 2>, 4>& dst_quad) {
    // Solve the 8x8 DLT system directly in double precision.
    // cv::getPerspectiveTransform can lose several digits of corner accuracy
    // under strong perspective; the direct solve lands the requested corners
    // to ~1e-14 px. Corners stay quantized to float to match warp metadata.
    const cv::Point2f src[4] = {{0.0f, 0.0f},
                                {float(width - 1), 0.0f},
                                {float(width - 1), float(height - 1)},
                                {0.0f, float(height - 1)}};
    cv::Point2f dst[4];
    for (int i = 0; i < 4; ++i)
        dst[i] = cv::Point2f(float(dst_quad[i][0]), float(dst_quad[i][1]));
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = src[i].x, y = src[i].y;
        const double u = dst[i].x, v = dst[i].y;
        a.row(2 * i) << x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y;
        a.row(2 * i + 1) << 0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
    return {h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0};
}

ImageRaster apply_perspective(const ImageRaster& image, const std::array<double, 9>& homography) {
    check_raster(image);
    cv::Mat h(3, 3, CV_64F);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) h.at<double>(r, c) = homography[size_t(r * 3 + c)];
    cv::Mat warped;
    cv::warpPerspective(to_mat_bgr(image), warped, h, cv::Size(image.width, image.height),
                        cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
    ImageRaster out = from_mat_bgr(warped);
    out.scene = image.scene;
    return out;
}

ImageRaster apply_warp(const ImageRaster& image, std::uint64_t seed,
                       const AttackOverrides& overrides, AttackMetadata* meta) {
    require_min_size(image, 64, "warp");
    Rng rng(family_stream_seed(seed, "warp"));
    std::map<std::string, double> params;
    ParamDraw draw(rng, overrides, params);
    const double magnitude = draw.uniform("magnitude", 0.0, 0.4);
    const double w = image.width, h = image.height;

    // Per-corner inward offsets, TL, TR, BR, BL; dx then dy for each.
    double off[8];
    const char* off_names[8] = {"dx_tl", "dy_tl", "dx_tr", "dy_tr",
                                "dx_br", "dy_br", "dx_bl", "dy_bl"};
    for (int i = 0; i < 8; ++i) {
        const double limit = (i % 2 == 0 ? w : h) * magnitude;
        off[i] = rng.uniform(0.0, limit);
        params[off_names[i]] = off[i];
    }
    draw.check_all_consumed();

    if (meta) {
        meta->family = "warp";
        meta->seed = seed;
        meta->params = params;
        meta->proxy = false;
    }
    bool all_zero = true;
    for (double v : off) all_zero = all_zero && v == 0.0;
    if (all_zero) return image;

    const std::array<std::array<double, 2>, 4> quad = {{{off[0], off[1]},
                                                        {w - 1 - off[2], off[3]},
                                                        {w - 1 - off[4], h - 1 - off[5]},
                                                        {off[6], h - 1 - off[7]}}};
    return apply_perspective(image, perspective_from_corners(image.width, image.height, quad));
}

ImageRaster regen_proxy_transform(const ImageRaster& image, std::uint64_t seed) {
    check_raster(image);
    cv::Mat blurred;
    cv::GaussianBlur(to_mat_bgr(image), blurred, cv::Size(0, 0), 2.0);
    ImageRaster out = from_mat_bgr(blurred);
    add_gaussian_noise(out, 0.1, hash64({seed, hash64_str("regen-noise")}));
    out.scene = image.scene;
    return out;
}

ImageRaster apply_regen(const ImageRaster& image, RegenBackend& backend, int steps,
                        std::uint64_t seed, AttackMetadata* meta) {
    check_raster(image);
    if (steps <= 0) throw std::invalid_argument("regen steps must be > 0");
    ImageRaster out = backend.regenerate(image, steps, seed);
    out.scene = image.scene;
    if (meta) {
        meta->family = "regen";
        meta->seed = seed;
        meta->params = {{"steps", double(steps)}};
        meta->proxy = backend.proxy();
    }
    return out;
}

ImageRaster apply_attack(const ImageRaster& image, const AttackSpec& spec, RegenBackend* regen,
                         AttackMetadata* meta) {
    switch (spec.family) {
        case AttackFamily::affine: return apply_affine(image, spec.seed, spec.overrides, meta);
        case AttackFamily::valuemetric:
            return apply_valuemetric(image, spec.seed, spec.overrides, meta);
        case AttackFamily::warp: return apply_warp(image, spec.seed, spec.overrides, meta);
        case AttackFamily::regen: {
            if (!regen)
                throw std::invalid_argument("regen attack requires a regeneration backend");
            int steps = 300;
            auto it = spec.overrides.find("steps");
            if (it != spec.overrides.end()) steps = int(it->second);
            return apply_regen(image, *regen, steps, spec.seed, meta);
        }
    }
    throw std::logic_error("bad attack family");
}

}  // namespace iconmark
