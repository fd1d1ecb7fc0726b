#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iconmark/image.hpp"

namespace iconmark {

inline constexpr size_t kKeyBits = 100;

struct WatermarkKey {
    std::vector<std::uint8_t> bits;  // exactly 100 entries, each 0/1

    static WatermarkKey from_seed(std::uint64_t seed);
    static WatermarkKey from_hex(const std::string& hex25);  // 25 hex chars, MSB-first
    std::string to_hex() const;
};

struct EmbedParams {
    double step = 36.0;  // QIM quantization step, luma units
    int block = 4;       // block side in the LL subband
    int dwt_levels = 1;
};

// QIM on the largest singular value of DCT'd 4x4 LL blocks (1-level orthonormal
// Haar on BT.601 luma). Key bits are tiled row-major across blocks.
ImageRaster embed_bits(const ImageRaster& image, const WatermarkKey& key,
                       const EmbedParams& params = {});

// Majority vote across tiles per key position.
std::vector<std::uint8_t> extract_bits(const ImageRaster& image, const EmbedParams& params = {});

// Fraction of matching bits in [0,1]; the continuous score for ROC fusion.
double bit_score(const std::vector<std::uint8_t>& extracted, const WatermarkKey& key);

}  // namespace iconmark
