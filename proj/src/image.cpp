#include "gridsage/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridsage/errors.hpp"

namespace gridsage {

Image::Image(int h, int w, double fill)
    : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

void Image::validate() const {
    if (height < 1 || width < 1)
        throw InvalidInputError("image dimensions must be at least 1x1, got " +
                                std::to_string(height) + "x" + std::to_string(width));
    if (values.size() != static_cast<std::size_t>(height) * width)
        throw InvalidInputError("image value count " + std::to_string(values.size()) +
                                " does not match " + std::to_string(height) + "x" +
                                std::to_string(width));
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidInputError("image intensity outside [0,1]: " + std::to_string(v));
    }
}

namespace {

// Reads the next header token, skipping whitespace and '#' comment lines.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) throw IoError("truncated PNM header in " + path);
    return tok;
}

int parse_int(const std::string& tok, const std::string& path) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw IoError("bad PNM header field '" + tok + "' in " + path);
    }
}

}  // namespace

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path);

    const std::string magic = next_token(in, path);
    if (magic != "P5" && magic != "P2")
        throw IoError("unsupported image format '" + magic + "' in " + path +
                      " (expected PGM P5 or P2)");

    const int width = parse_int(next_token(in, path), path);
    const int height = parse_int(next_token(in, path), path);
    const int maxval = parse_int(next_token(in, path), path);
    if (width < 1 || height < 1)
        throw IoError("bad PGM dimensions " + std::to_string(width) + "x" +
                      std::to_string(height) + " in " + path);
    if (maxval < 1 || maxval > 255)
        throw IoError("unsupported PGM maxval " + std::to_string(maxval) + " in " + path +
                      " (8-bit only)");

    Image img(height, width);
    const std::size_t n = img.values.size();
    if (magic == "P5") {
        std::vector<std::uint8_t> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw IoError("truncated PGM pixel data in " + path);
        for (std::size_t i = 0; i < n; ++i) img.values[i] = raw[i] / static_cast<double>(maxval);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const int v = parse_int(next_token(in, path), path);
            if (v < 0 || v > maxval) throw IoError("PGM sample out of range in " + path);
            img.values[i] = v / static_cast<double>(maxval);
        }
    }
    return img;
}

void write_pgm(const Image& img, const std::string& path) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> raw(img.values.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i] = static_cast<std::uint8_t>(std::lround(img.values[i] * 255.0));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("short write to " + path);
}

void write_ppm(const RgbImage& img, const std::string& path) {
    if (img.height < 1 || img.width < 1 ||
        img.rgb.size() != static_cast<std::size_t>(img.height) * img.width * 3)
        throw InvalidInputError("malformed RGB image buffer");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace gridsage
