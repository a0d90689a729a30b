#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gridsage {

// Grayscale image, row-major, intensities normalized to [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Image() = default;
    Image(int h, int w, double fill = 0.0);

    int num_pixels() const { return height * width; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }

    // Throws InvalidInputError if dims/values break the type invariants.
    void validate() const;
};

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}
};

// PGM (P5 binary, P2 ascii) readers/writers; intensities divided by maxval
// on load. 8-bit only.
Image read_pgm(const std::string& path);
void write_pgm(const Image& img, const std::string& path);

// Binary PPM (P6) writer for saliency overlays.
void write_ppm(const RgbImage& img, const std::string& path);

}  // namespace gridsage
