#pragma once

// Synthetic H&E-like rasters for fixtures, demos and the benchmark.

#include <cstdint>
#include <vector>

#include "histograph/image.hpp"
#include "histograph/stain.hpp"

namespace histograph::synth {

/// Beer-Lambert composition of per-pixel concentrations.
Image compose(const stain::StainMatrix& stains, const stain::ConcentrationMap& conc);

struct Disk {
    double row = 0, col = 0, radius = 0;
};

/// Hematoxylin-only disks on white; a pixel is inside when its centre lies
/// within the radius. Overlaps add concentration.
Image render_disks(int height, int width, const std::vector<Disk>& disks, double concentration = 1.0);

/// Seeded pseudo-tissue: eosin stroma blobs with hematoxylin nuclei on a
/// near-white background.
Image pseudo_tissue(int side, std::uint64_t seed);

}  // namespace histograph::synth
