#include "histograph/color.hpp"

#include <cmath>

namespace histograph {

namespace {

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

struct LinearTable {
    double v[256];
    LinearTable() {
        for (int i = 0; i < 256; ++i) v[i] = srgb_to_linear(i / 255.0);
    }
};

const LinearTable& linear_table() {
    static const LinearTable table;
    return table;
}

}  // namespace

Lab rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const auto& lin = linear_table();
    const double r = lin.v[r8], g = lin.v[g8], b = lin.v[b8];
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    // D65 white
    const double fx = lab_f(x / 0.95047);
    const double fy = lab_f(y / 1.00000);
    const double fz = lab_f(z / 1.08883);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::vector<Lab> image_to_lab(const Image& img) {
    std::vector<Lab> out(img.pixel_count());
    auto d = img.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = rgb_to_lab(d[3 * i], d[3 * i + 1], d[3 * i + 2]);
    }
    return out;
}

double lab_distance(const Lab& a, const Lab& b) {
    const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
    return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

}  // namespace histograph
