#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iconmark {

// Mock-world sidecar: what is "in" a synthetic image.
struct SceneRecord {
    std::string prompt;
    std::vector<std::string> concepts;  // no duplicates
    std::uint64_t seed = 0;

    std::string to_json() const;
    static SceneRecord from_json(const std::string& text);
    bool operator==(const SceneRecord&) const = default;
};

// 8-bit RGB, row-major, 3 channels. The unit flowing through generation,
// watermarking, attacks and detection.
struct ImageRaster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // size == width*height*3, RGB order
    std::optional<SceneRecord> scene;

    std::uint8_t& at(int x, int y, int c) { return data[(size_t(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return data[(size_t(y) * width + x) * 3 + c]; }
};

inline constexpr int kMinImageDim = 16;

// Zero-filled raster; throws if dimensions violate invariants.
ImageRaster make_raster(int width, int height);
void check_raster(const ImageRaster& img);  // throws std::invalid_argument

std::vector<unsigned char> encode_png(const ImageRaster& img);
ImageRaster decode_png(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_jpeg(const ImageRaster& img, int quality);
ImageRaster decode_jpeg(const std::vector<unsigned char>& bytes);

// PNG on disk; a scene sidecar (<stem>.scene.json) is written/loaded when present.
void save_image(const ImageRaster& img, const std::filesystem::path& path);
ImageRaster load_image(const std::filesystem::path& path);
std::filesystem::path scene_sidecar_path(const std::filesystem::path& image_path);

// Peak signal-to-noise ratio in dB over all channels; +inf for identical images.
double psnr(const ImageRaster& a, const ImageRaster& b);

// BT.601 luma in [0, 255].
inline double luma601(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

}  // namespace iconmark
