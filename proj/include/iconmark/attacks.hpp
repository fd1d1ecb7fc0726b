#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "iconmark/backends.hpp"
#include "iconmark/image.hpp"

namespace iconmark {

enum class AttackFamily { affine, valuemetric, warp, regen };

AttackFamily parse_attack_family(const std::string& name);
std::string attack_family_name(AttackFamily f);

// Optional parameter overrides; applied after drawing so the random stream is
// identical with or without them, and validated against the documented ranges.
using AttackOverrides = std::map<std::string, double>;

struct AttackSpec {
    AttackFamily family = AttackFamily::affine;
    std::uint64_t seed = 0;
    AttackOverrides overrides;
};

// Drawn parameters + provenance, written to <out>.attack.json.
struct AttackMetadata {
    std::string family;
    std::uint64_t seed = 0;
    std::map<std::string, double> params;
    bool proxy = false;     // regen offline stand-in
    std::string fill = "black";
    std::string to_json() const;
};

// Rotation U[-20,20] deg (bilinear, black fill), crop of area fraction
// U[0.70,0.95] at a uniform position, resize back to original dimensions.
// Overrides: rotation_deg, area, cx, cy (crop placement in [0,1]).
ImageRaster apply_affine(const ImageRaster& image, std::uint64_t seed,
                         const AttackOverrides& overrides = {}, AttackMetadata* meta = nullptr);

// brightness -> contrast -> blur -> noise -> JPEG, each included w.p. 1/2
// (redrawn until at least one), parameters uniform in the documented ranges.
// Overrides: include_{brightness,contrast,blur,noise,jpeg} (0/1), brightness,
// contrast, blur_radius, noise_sigma, jpeg_quality.
ImageRaster apply_valuemetric(const ImageRaster& image, std::uint64_t seed,
                              const AttackOverrides& overrides = {},
                              AttackMetadata* meta = nullptr);

// Perspective warp: magnitude m ~ U[0,0.4]; each corner displaced inward by
// offsets U[0, m*W] x U[0, m*H]. Overrides: magnitude.
ImageRaster apply_warp(const ImageRaster& image, std::uint64_t seed,
                       const AttackOverrides& overrides = {}, AttackMetadata* meta = nullptr);

// External image-to-image regeneration (default 300 steps); offline backends
// flag their outputs as proxy.
ImageRaster apply_regen(const ImageRaster& image, RegenBackend& backend, int steps = 300,
                        std::uint64_t seed = 0, AttackMetadata* meta = nullptr);

ImageRaster apply_attack(const ImageRaster& image, const AttackSpec& spec,
                         RegenBackend* regen = nullptr, AttackMetadata* meta = nullptr);

// The offline regen stand-in: Gaussian blur (radius 2) + additive noise
// (sigma 0.1 on the [0,1] scale), seeded.
ImageRaster regen_proxy_transform(const ImageRaster& image, std::uint64_t seed);

// Homography mapping the full-image corners onto dst_quad (TL,TR,BR,BL in
// pixel coordinates), row-major 3x3. Exposed for oracle verification.
std::array<double, 9> perspective_from_corners(int width, int height,
                                               const std::array<std::array<double, 2>, 4>& dst_quad);
ImageRaster apply_perspective(const ImageRaster& image, const std::array<double, 9>& homography);

}  // namespace iconmark
