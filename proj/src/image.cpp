#include "iconmark/image.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cv_util.hpp"

namespace iconmark {

using nlohmann::json;

std::string SceneRecord::to_json() const {
    json j;
    j["prompt"] = prompt;
    j["concepts"] = concepts;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

SceneRecord SceneRecord::from_json(const std::string& text) {
    const json j = json::parse(text);
    SceneRecord r;
    r.prompt = j.at("prompt").get<std::string>();
    r.concepts = j.at("concepts").get<std::vector<std::string>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (size_t i = 0; i < r.concepts.size(); ++i)
        for (size_t k = i + 1; k < r.concepts.size(); ++k)
            if (r.concepts[i] == r.concepts[k])
                throw std::invalid_argument("SceneRecord: duplicate concept '" + r.concepts[i] + "'");
    return r;
}

ImageRaster make_raster(int width, int height) {
    ImageRaster img;
    img.width = width;
    img.height = height;
    if (width < kMinImageDim || height < kMinImageDim)
        throw std::invalid_argument("ImageRaster: dimensions must be >= 16x16");
    img.data.assign(size_t(width) * height * 3, 0);
    return img;
}

void check_raster(const ImageRaster& img) {
    if (img.width < kMinImageDim || img.height < kMinImageDim)
        throw std::invalid_argument("ImageRaster: dimensions must be >= 16x16");
    if (img.data.size() != size_t(img.width) * img.height * 3)
        throw std::invalid_argument("ImageRaster: data length != width*height*3");
}

std::vector<unsigned char> encode_png(const ImageRaster& img) {
    check_raster(img);
    std::vector<unsigned char> out;
    if (!cv::imencode(".png", to_mat_bgr(img), out))
        throw std::runtime_error("PNG encode failed");
    return out;
}

ImageRaster decode_png(const std::vector<unsigned char>& bytes) {
    const cv::Mat m = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("PNG decode failed: undecodable payload");
    ImageRaster img = from_mat_bgr(m);
    check_raster(img);
    return img;
}

std::vector<unsigned char> encode_jpeg(const ImageRaster& img, int quality) {
    check_raster(img);
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("JPEG quality out of [1,100]");
    std::vector<unsigned char> out;
    if (!cv::imencode(".jpg", to_mat_bgr(img), out, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw std::runtime_error("JPEG encode failed");
    return out;
}

ImageRaster decode_jpeg(const std::vector<unsigned char>& bytes) {
    const cv::Mat m = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("JPEG decode failed: undecodable payload");
    ImageRaster img = from_mat_bgr(m);
    check_raster(img);
    return img;
}

std::filesystem::path scene_sidecar_path(const std::filesystem::path& image_path) {
    std::filesystem::path p = image_path;
    p.replace_extension();
    p += ".scene.json";
    return p;
}

void save_image(const ImageRaster& img, const std::filesystem::path& path) {
    const auto bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    f.close();
    if (!f) throw std::runtime_error("write failed: " + path.string());
    if (img.scene) {
        std::ofstream s(scene_sidecar_path(path), std::ios::binary);
        if (!s) throw std::runtime_error("cannot write scene sidecar for " + path.string());
        s << img.scene->to_json();
    } else {
        // A stale sidecar from a previous write must not resurrect a scene.
        std::filesystem::remove(scene_sidecar_path(path));
    }
}

ImageRaster load_image(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("missing image file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    ImageRaster img = decode_png(bytes);
    const auto sidecar = scene_sidecar_path(path);
    if (std::filesystem::exists(sidecar)) {
        std::ifstream s(sidecar, std::ios::binary);
        std::string text((std::istreambuf_iterator<char>(s)), std::istreambuf_iterator<char>());
        img.scene = SceneRecord::from_json(text);
    }
    return img;
}

double psnr(const ImageRaster& a, const ImageRaster& b) {
    check_raster(a);
    check_raster(b);
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("psnr: dimension mismatch");
    double se = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / double(a.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace iconmark
