#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>
#include <vector>

#include "iconmark/attacks.hpp"
#include "iconmark/image.hpp"
#include "iconmark/rng.hpp"

using namespace iconmark;

namespace {

ImageRaster noise_image(int w, int h, std::uint64_t seed) {
    ImageRaster img = make_raster(w, h);
    Rng rng(seed);
    for (auto& v : img.data) v = (unsigned char)(rng.uniform_int(0, 255));
    return img;
}

ImageRaster flat_image(int w, int h, unsigned char value) {
    ImageRaster img = make_raster(w, h);
    std::fill(img.data.begin(), img.data.end(), value);
    return img;
}

// Independent DLT: solve the 8x8 linear system for h (h22 = 1). Corner
// coordinates are quantized to float to match the production interface.
std::array<double, 9> dlt_homography(int width, int height,
                                     const std::array<std::array<double, 2>, 4>& dst) {
    const double src[4][2] = {{0.0, 0.0},
                              {double(width - 1), 0.0},
                              {double(width - 1), double(height - 1)},
                              {0.0, double(height - 1)}};
    Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = src[i][0], y = src[i][1];
        const double u = double(float(dst[size_t(i)][0]));
        const double v = double(float(dst[size_t(i)][1]));
        a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
    return {h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0};
}

}  // namespace

TEST_CASE("attack family names round trip") {
    for (auto f : {AttackFamily::affine, AttackFamily::valuemetric, AttackFamily::warp,
                   AttackFamily::regen})
        CHECK(parse_attack_family(attack_family_name(f)) == f);
    CHECK_THROWS(parse_attack_family("rotate"));
}

TEST_CASE("affine draws stay in range and cover both rotation signs") {
    const ImageRaster img = noise_image(64, 64, 1);
    bool pos = false, neg = false;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        AttackMetadata meta;
        const ImageRaster out = apply_affine(img, seed, {}, &meta);
        CHECK(out.width == img.width);
        CHECK(out.height == img.height);
        const double rot = meta.params.at("rotation_deg");
        const double area = meta.params.at("area");
        CHECK(rot >= -20.0);
        CHECK(rot <= 20.0);
        CHECK(area >= 0.70);
        CHECK(area <= 0.95);
        CHECK(meta.params.at("cx") >= 0.0);
        CHECK(meta.params.at("cx") <= 1.0);
        CHECK(meta.params.at("cy") >= 0.0);
        CHECK(meta.params.at("cy") <= 1.0);
        CHECK(meta.family == "affine");
        CHECK(meta.fill == "black");
        pos = pos || rot > 10.0;
        neg = neg || rot < -10.0;
    }
    CHECK(pos);
    CHECK(neg);
}

TEST_CASE("affine on a constant image with zero rotation is the identity") {
    const ImageRaster img = flat_image(96, 80, 137);
    const ImageRaster out = apply_affine(img, 5, {{"rotation_deg", 0.0}});
    CHECK(out.data == img.data);
    // Any real rotation introduces black fill at the corners pre-crop; most
    // crop placements keep some of it.
    const ImageRaster rot = apply_affine(img, 5, {{"rotation_deg", 18.0}, {"cx", 0.0}, {"cy", 0.0}});
    CHECK(rot.data != img.data);
}

TEST_CASE("affine overrides replace draws without shifting the stream") {
    const ImageRaster img = noise_image(64, 64, 2);
    AttackMetadata base, with;
    apply_affine(img, 42, {}, &base);
    apply_affine(img, 42, {{"cx", 0.5}}, &with);
    CHECK(with.params.at("cx") == 0.5);
    CHECK(with.params.at("rotation_deg") == base.params.at("rotation_deg"));
    CHECK(with.params.at("area") == base.params.at("area"));
    CHECK(with.params.at("cy") == base.params.at("cy"));

    CHECK_THROWS(apply_affine(img, 42, {{"rotation_deg", 25.0}}));
    CHECK_THROWS(apply_affine(img, 42, {{"area", 0.5}}));
    CHECK_THROWS(apply_affine(img, 42, {{"zoom", 1.0}}));
}

TEST_CASE("same seed reproduces the attack exactly") {
    const ImageRaster img = noise_image(80, 64, 3);
    for (auto family : {AttackFamily::affine, AttackFamily::valuemetric, AttackFamily::warp}) {
        AttackSpec spec;
        spec.family = family;
        spec.seed = 77;
        const ImageRaster a = apply_attack(img, spec);
        const ImageRaster b = apply_attack(img, spec);
        CHECK(a.data == b.data);
        spec.seed = 78;
        CHECK(apply_attack(img, spec).data != a.data);
    }
}

TEST_CASE("valuemetric draws stay in range with at least one perturbation") {
    const ImageRaster img = noise_image(48, 48, 4);
    std::set<std::string> seen_on, seen_off;
    const char* flags[5] = {"include_brightness", "include_contrast", "include_blur",
                            "include_noise", "include_jpeg"};
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        AttackMetadata meta;
        const ImageRaster out = apply_valuemetric(img, seed, {}, &meta);
        CHECK(out.width == img.width);
        CHECK(out.height == img.height);
        int on = 0;
        for (const char* f : flags) {
            const double v = meta.params.at(f);
            CHECK((v == 0.0 || v == 1.0));
            (v == 1.0 ? seen_on : seen_off).insert(f);
            on += v == 1.0;
        }
        CHECK(on >= 1);
        CHECK(meta.params.at("brightness") >= 1.4);
        CHECK(meta.params.at("brightness") <= 1.7);
        CHECK(meta.params.at("contrast") >= 1.4);
        CHECK(meta.params.at("contrast") <= 1.7);
        CHECK(meta.params.at("blur_radius") >= 1.0);
        CHECK(meta.params.at("blur_radius") <= 3.0);
        CHECK(meta.params.at("noise_sigma") >= 0.05);
        CHECK(meta.params.at("noise_sigma") <= 0.15);
        const double q = meta.params.at("jpeg_quality");
        CHECK(q >= 40.0);
        CHECK(q <= 70.0);
        CHECK(q == std::floor(q));
    }
    CHECK(seen_on.size() == 5);   // every perturbation appears enabled...
    CHECK(seen_off.size() == 5);  // ...and disabled across 300 seeds
}

TEST_CASE("brightness-only valuemetric matches the pixel formula exactly") {
    const ImageRaster img = noise_image(32, 32, 5);
    const AttackOverrides ov{{"include_brightness", 1}, {"include_contrast", 0},
                             {"include_blur", 0},       {"include_noise", 0},
                             {"include_jpeg", 0},       {"brightness", 1.5}};
    const ImageRaster out = apply_valuemetric(img, 9, ov);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(out.data[i] ==
              std::uint8_t(std::clamp(std::round(double(img.data[i]) * 1.5), 0.0, 255.0)));
}

TEST_CASE("contrast-only valuemetric stretches around the mean luma") {
    const ImageRaster img = noise_image(32, 32, 6);
    const AttackOverrides ov{{"include_brightness", 0}, {"include_contrast", 1},
                             {"include_blur", 0},       {"include_noise", 0},
                             {"include_jpeg", 0},       {"contrast", 1.6}};
    const ImageRaster out = apply_valuemetric(img, 9, ov);
    double mean = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            mean += luma601(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
    mean /= double(img.width) * double(img.height);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(out.data[i] == std::uint8_t(std::clamp(
                                 std::round(mean + 1.6 * (double(img.data[i]) - mean)), 0.0, 255.0)));
}

TEST_CASE("valuemetric flag overrides are validated") {
    const ImageRaster img = noise_image(32, 32, 7);
    CHECK_THROWS(apply_valuemetric(img, 1,
                                   {{"include_brightness", 0},
                                    {"include_contrast", 0},
                                    {"include_blur", 0},
                                    {"include_noise", 0},
                                    {"include_jpeg", 0}}));
    CHECK_THROWS(apply_valuemetric(img, 1, {{"include_blur", 0.5}}));
    CHECK_THROWS(apply_valuemetric(img, 1, {{"jpeg_quality", 55.5}}));
    CHECK_THROWS(apply_valuemetric(img, 1, {{"noise_sigma", 0.4}}));
    CHECK_THROWS(apply_valuemetric(img, 1, {{"gamma", 1.0}}));
}

TEST_CASE("warp draws stay in range and magnitude zero is the identity") {
    const ImageRaster img = noise_image(64, 64, 8);
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        AttackMetadata meta;
        const ImageRaster out = apply_warp(img, seed, {}, &meta);
        CHECK(out.width == img.width);
        CHECK(out.height == img.height);
        const double m = meta.params.at("magnitude");
        CHECK(m >= 0.0);
        CHECK(m <= 0.4);
        for (const char* dx : {"dx_tl", "dx_tr", "dx_br", "dx_bl"}) {
            CHECK(meta.params.at(dx) >= 0.0);
            CHECK(meta.params.at(dx) <= m * img.width);
        }
        for (const char* dy : {"dy_tl", "dy_tr", "dy_br", "dy_bl"}) {
            CHECK(meta.params.at(dy) >= 0.0);
            CHECK(meta.params.at(dy) <= m * img.height);
        }
    }
    const ImageRaster same = apply_warp(img, 12, {{"magnitude", 0.0}});
    CHECK(same.data == img.data);
    CHECK_THROWS(apply_warp(img, 12, {{"magnitude", 0.5}}));
}

TEST_CASE("perspective_from_corners matches an independent DLT solve") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = int(rng.uniform_int(64, 256));
        const int h = int(rng.uniform_int(64, 256));
        std::array<std::array<double, 2>, 4> quad;
        const double m = rng.uniform(0.05, 0.4);
        const double dx[4] = {rng.uniform(0.0, m * w), rng.uniform(0.0, m * w),
                              rng.uniform(0.0, m * w), rng.uniform(0.0, m * w)};
        const double dy[4] = {rng.uniform(0.0, m * h), rng.uniform(0.0, m * h),
                              rng.uniform(0.0, m * h), rng.uniform(0.0, m * h)};
        quad[0] = {dx[0], dy[0]};
        quad[1] = {w - 1 - dx[1], dy[1]};
        quad[2] = {w - 1 - dx[2], h - 1 - dy[2]};
        quad[3] = {dx[3], h - 1 - dy[3]};
        const auto got = perspective_from_corners(w, h, quad);
        const auto want = dlt_homography(w, h, quad);
        for (int i = 0; i < 9; ++i) CHECK(std::abs(got[size_t(i)] - want[size_t(i)]) < 1e-6);
    }
}

TEST_CASE("identity homography is an exact copy") {
    const ImageRaster img = noise_image(64, 48, 9);
    const std::array<double, 9> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
    CHECK(apply_perspective(img, eye).data == img.data);
}

TEST_CASE("regen proxy transform is seeded and structure-preserving") {
    ImageRaster img = noise_image(64, 64, 10);
    SceneRecord scene;
    scene.prompt = "p";
    scene.concepts = {"a tree"};
    img.scene = scene;
    const ImageRaster a = regen_proxy_transform(img, 5);
    const ImageRaster b = regen_proxy_transform(img, 5);
    const ImageRaster c = regen_proxy_transform(img, 6);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
    CHECK(a.width == img.width);
    CHECK(a.height == img.height);
    REQUIRE(a.scene.has_value());
    CHECK(a.scene->prompt == "p");
    CHECK(a.data != img.data);
}

TEST_CASE("apply_regen threads the backend and records proxy provenance") {
    struct ProxyBackend : RegenBackend {
        std::string id() const override { return "test-proxy"; }
        bool proxy() const override { return true; }
        ImageRaster regenerate(const ImageRaster& image, int steps, std::uint64_t seed) override {
            last_steps = steps;
            return regen_proxy_transform(image, seed);
        }
        int last_steps = 0;
    };
    ProxyBackend backend;
    const ImageRaster img = noise_image(64, 64, 11);
    AttackMetadata meta;
    const ImageRaster out = apply_regen(img, backend, 300, 1, &meta);
    CHECK(backend.last_steps == 300);
    CHECK(meta.proxy);
    CHECK(meta.family == "regen");
    CHECK(meta.params.at("steps") == 300.0);
    CHECK(out.width == img.width);
    CHECK_THROWS(apply_regen(img, backend, 0, 1));

    AttackSpec spec;
    spec.family = AttackFamily::regen;
    spec.seed = 2;
    CHECK_THROWS(apply_attack(img, spec));  // no backend provided
    spec.overrides = {{"steps", 25.0}};
    AttackMetadata meta2;
    apply_attack(img, spec, &backend, &meta2);
    CHECK(backend.last_steps == 25);
    CHECK(meta2.params.at("steps") == 25.0);
}

TEST_CASE("scenes survive every pixel-level attack") {
    ImageRaster img = noise_image(64, 64, 12);
    SceneRecord scene;
    scene.prompt = "a prompt";
    scene.concepts = {"a tree", "a mountain"};
    img.scene = scene;
    for (auto family : {AttackFamily::affine, AttackFamily::valuemetric, AttackFamily::warp}) {
        AttackSpec spec;
        spec.family = family;
        spec.seed = 3;
        const ImageRaster out = apply_attack(img, spec);
        REQUIRE(out.scene.has_value());
        CHECK(out.scene->concepts == scene.concepts);
    }
}

TEST_CASE("attack metadata serializes to the documented JSON shape") {
    const ImageRaster img = noise_image(64, 64, 13);
    AttackMetadata meta;
    apply_affine(img, 21, {}, &meta);
    const auto j = nlohmann::json::parse(meta.to_json());
    CHECK(j["family"] == "affine");
    CHECK(j["seed"] == 21);
    CHECK(j["fill"] == "black");
    CHECK(j["proxy"] == false);
    CHECK(j["params"].contains("rotation_deg"));
    CHECK(j["params"].contains("area"));
}

TEST_CASE("undersized inputs are rejected per family") {
    CHECK_THROWS(apply_affine(noise_image(48, 48, 1), 0));
    CHECK_THROWS(apply_warp(noise_image(48, 48, 1), 0));
    CHECK_THROWS(apply_valuemetric(noise_image(16, 8, 1), 0));  // below raster minimum
}
