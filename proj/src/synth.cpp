#include "histograph/synth.hpp"

#include <algorithm>
#include <cmath>

#include "histograph/random.hpp"

namespace histograph::synth {

Image compose(const stain::StainMatrix& stains, const stain::ConcentrationMap& conc) {
    stain::OdField od{conc.height, conc.width, std::vector<double>(conc.values.size() / 2 * 3)};
    const auto w = stains.matrix();
    for (std::size_t i = 0; i < conc.values.size() / 2; ++i) {
        const Eigen::Vector3d v = w * Eigen::Vector2d(conc.values[2 * i], conc.values[2 * i + 1]);
        for (int c = 0; c < 3; ++c) od.values[3 * i + c] = std::max(0.0, v(c));
    }
    return stain::od_to_rgb(od);
}

namespace {

void add_ellipse(stain::ConcentrationMap& conc, int channel, double cr, double cc, double ra, double rb,
                 double angle, double amount) {
    const double reach = std::max(ra, rb);
    const int r0 = std::max(0, static_cast<int>(std::floor(cr - reach)));
    const int r1 = std::min(conc.height - 1, static_cast<int>(std::ceil(cr + reach)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cc - reach)));
    const int c1 = std::min(conc.width - 1, static_cast<int>(std::ceil(cc + reach)));
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double dr = r - cr, dc = c - cc;
            const double u = (dr * ca + dc * sa) / ra, v = (-dr * sa + dc * ca) / rb;
            if (u * u + v * v <= 1.0) {
                conc.values[2 * (static_cast<std::size_t>(r) * conc.width + c) + channel] += amount;
            }
        }
    }
}

}  // namespace

Image render_disks(int height, int width, const std::vector<Disk>& disks, double concentration) {
    stain::ConcentrationMap conc{height, width, std::vector<double>(2 * static_cast<std::size_t>(height) * width, 0.0)};
    for (const auto& d : disks) add_ellipse(conc, 0, d.row, d.col, d.radius, d.radius, 0.0, concentration);
    return compose(stain::default_profile().stains, conc);
}

Image pseudo_tissue(int side, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = static_cast<std::size_t>(side) * side;
    stain::ConcentrationMap conc{side, side, std::vector<double>(2 * n, 0.0)};
    const double area = double(side) * side;

    const int stroma = std::max(1, static_cast<int>(area / 9000.0));
    for (int i = 0; i < stroma; ++i) {
        add_ellipse(conc, 1, rng.uniform(0, side), rng.uniform(0, side), rng.uniform(20, 60), rng.uniform(15, 45),
                    rng.uniform(0, 3.14159), rng.uniform(0.4, 0.8));
        add_ellipse(conc, 0, rng.uniform(0, side), rng.uniform(0, side), rng.uniform(15, 40), rng.uniform(15, 40),
                    0.0, rng.uniform(0.05, 0.2));
    }
    const int nuclei = std::max(1, static_cast<int>(area / 700.0));
    for (int i = 0; i < nuclei; ++i) {
        const double r = rng.uniform(4, 7);
        add_ellipse(conc, 0, rng.uniform(0, side), rng.uniform(0, side), r, r * rng.uniform(0.7, 1.0),
                    rng.uniform(0, 3.14159), rng.uniform(0.7, 1.2));
    }
    for (auto& v : conc.values) v = std::max(0.0, v + 0.02 * rng.normal());
    return compose(stain::default_profile().stains, conc);
}

}  // namespace histograph::synth
