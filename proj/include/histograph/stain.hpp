#pragma once

// Beer-Lambert stain separation and H&E stain normalization.
//
// Optical density uses OD = -log10((I + 1) / 256) per channel, so an 8-bit
// intensity maps into [0, log10(256)] and back exactly.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "histograph/error.hpp"
#include "histograph/image.hpp"

namespace histograph::stain {

class StainEstimationError : public Error {
public:
    enum class Kind { TooFewTissuePixels, DegenerateCovariance, SingularStainMatrix };

    StainEstimationError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Per-pixel OD triplets, row-major.
struct OdField {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // 3 per pixel
};

double intensity_to_od(std::uint8_t intensity);
std::uint8_t od_to_intensity(double od);

OdField rgb_to_od(const Image& img);
Image od_to_rgb(const OdField& od);

/// Unit-norm, non-negative hematoxylin and eosin OD directions.
struct StainMatrix {
    Eigen::Vector3d hematoxylin;
    Eigen::Vector3d eosin;

    /// 3x2 matrix with hematoxylin in column 0.
    Eigen::Matrix<double, 3, 2> matrix() const;

    /// Normalizes both columns and checks non-negativity.
    static StainMatrix from_columns(const Eigen::Vector3d& h, const Eigen::Vector3d& e);
};

struct StainProfile {
    StainMatrix stains;
    std::array<double, 2> max_conc{};  // 99th-percentile concentration per stain
};

/// Built-in reference used for reference-free normalization: the classic
/// Macenko H&E reference vectors and maximum concentrations.
StainProfile default_profile();

enum class Method { Macenko, Vahadane };

Method parse_method(const std::string& name);
std::string method_name(Method m);

struct StainParams {
    double beta = 0.15;    // OD threshold for tissue pixels
    double alpha = 1.0;    // angle percentile (Macenko)
    double lambda = 0.1;   // L1 weight on concentrations (Vahadane)
    int iters = 50;        // alternating updates (Vahadane)
    double tolerance = 1e-4;  // relative objective change stop (Vahadane)
};

/// OD of pixels whose every channel exceeds `beta`, one column per pixel.
Eigen::Matrix3Xd tissue_od(const Image& img, double beta);

/// Angle between two directions in degrees.
double angle_degrees(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Hematoxylin is the direction with the larger red OD; ties keep `first`.
StainMatrix label_stains(const Eigen::Vector3d& first, const Eigen::Vector3d& second);

StainMatrix macenko_from_od(const Eigen::Matrix3Xd& od, double alpha);
StainMatrix estimate_stains_macenko(const Image& img, const StainParams& params = {});

struct VahadaneResult {
    StainMatrix stains;
    Eigen::Matrix2Xd concentrations;
    std::vector<double> objective;  // after initialization, then after each accepted iteration
    int iterations = 0;
};

/// Sparse non-negative factorization V ~ W H, W with unit columns.
VahadaneResult vahadane_factorize(const Eigen::Matrix3Xd& od, const StainMatrix& init,
                                  const StainParams& params);
StainMatrix estimate_stains_vahadane(const Image& img, const StainParams& params = {});

StainMatrix estimate_stains(const Image& img, Method method, const StainParams& params = {});

struct ConcentrationMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // 2 per pixel: hematoxylin, eosin
};

/// Per-pixel least squares OD ~ W c, clamped to c >= 0.
ConcentrationMap fit_concentrations(const Image& img, const StainMatrix& stains);

StainProfile estimate_profile(const Image& img, Method method, const StainParams& params = {});

/// Maps `img` onto `reference` stain vectors and concentration ranges. Without
/// a reference the built-in default profile is used.
Image normalize(const Image& img, Method method, const std::optional<StainProfile>& reference,
                const StainParams& params = {});

std::string profile_to_json(const StainProfile& profile);
StainProfile profile_from_json(const std::string& text);

}  // namespace histograph::stain
