#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sspe {

// Grayscale raster with pixel values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), px(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    double& at(int r, int c) { return px[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return px[static_cast<std::size_t>(r) * width + c]; }
};

enum class PgmError { bad_header, unsupported_maxval, truncated_payload };

class PgmReadError : public std::runtime_error {
public:
    PgmReadError(PgmError code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    PgmError code() const { return code_; }

private:
    PgmError code_;
};

namespace detail {

// Reads one whitespace-delimited token, skipping '#' comment lines.
inline std::string pgm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

}  // namespace detail

// Binary portable graymap (P5), maxval 255 only.
inline Image load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PgmReadError(PgmError::bad_header, "cannot open " + path);
    if (detail::pgm_token(in) != "P5")
        throw PgmReadError(PgmError::bad_header, path + ": not a binary graymap (P5)");
    int w = 0, h = 0;
    long maxval = 0;
    try {
        w = std::stoi(detail::pgm_token(in));
        h = std::stoi(detail::pgm_token(in));
        maxval = std::stol(detail::pgm_token(in));
    } catch (const std::exception&) {
        throw PgmReadError(PgmError::bad_header, path + ": malformed header");
    }
    if (w <= 0 || h <= 0) throw PgmReadError(PgmError::bad_header, path + ": bad dimensions");
    if (maxval != 255)
        throw PgmReadError(PgmError::unsupported_maxval,
                           path + ": unsupported maxval " + std::to_string(maxval));
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw PgmReadError(PgmError::truncated_payload, path + ": truncated payload");
    Image img(h, w);
    for (std::size_t i = 0; i < n; ++i) img.px[i] = static_cast<double>(raw[i]) / 255.0;
    return img;
}

// Quantizes to 8 bits; write(load(x)) is byte-identical for valid P5 input.
inline void save_pgm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.px.size());
    for (std::size_t i = 0; i < img.px.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img.px[i]));
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("short write on " + path);
}

}  // namespace sspe
