#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "histograph/image.hpp"

namespace histograph::features {

/// Named per-entity feature columns; row i belongs to entity ids[i].
struct FeatureMatrix {
    std::vector<std::int32_t> ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    /// Throws NumericalError on NaN/Inf, InvalidArgument on shape or name problems.
    void validate() const;

    friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
        return a.ids == b.ids && a.names == b.names && a.values.rows() == b.values.rows() &&
               a.values.cols() == b.values.cols() && a.values == b.values;
    }
};

/// area, convex_area, eccentricity, equivalent_diameter, euler_number,
/// major_axis_length, minor_axis_length, orientation, perimeter, solidity,
/// convex_hull_perimeter, roughness, shape_factor, ellipticity, roundness.
FeatureMatrix morphology_features(const LabelMap& labels, const EntityTable& table);

/// Moore-neighbour contour length (orthogonal step 1, diagonal sqrt 2)
/// summed over the 8-connected components of a binary mask.
double contour_perimeter(const GrayImage& mask);

/// Euler number (components minus holes) of a binary mask with 8-connected
/// foreground, by bit-quad counting.
int euler_number(const GrayImage& mask);

/// Convex hull of integer points, counter-clockwise, collinear points dropped.
std::vector<std::pair<long long, long long>> convex_hull(std::vector<std::pair<long long, long long>> pts);

struct GlcmParams {
    int levels = 32;
    std::vector<std::pair<int, int>> offsets{{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    bool symmetric = true;
    bool normalize = true;

    void validate() const;
};

/// Co-occurrence matrix of one entity at one offset, levels x levels.
/// `gray` is the full image, `labels` selects the entity.
Eigen::MatrixXd glcm(const GrayImage& gray, const LabelMap& labels, std::int32_t id,
                     std::pair<int, int> offset, const GlcmParams& params);

struct GlcmStats {
    double contrast = 0, dissimilarity = 0, homogeneity = 0, asm_ = 0, energy = 0, dispersion = 0;
};

/// Texture statistics of a probability matrix. Dispersion is the variance of
/// the row index under P.
GlcmStats glcm_stats(const Eigen::MatrixXd& p);

/// glcm_contrast ... glcm_dispersion averaged over offsets, plus glcm_empty
/// (1 when the entity has no co-occurring pixel pair; the others are 0 then).
FeatureMatrix glcm_features(const Image& img, const LabelMap& labels, const GlcmParams& params = {});

/// crowd_mean, crowd_var: mean and population variance of the distances to
/// the min(k, N-1) nearest other centroids.
FeatureMatrix crowdedness_features(const EntityTable& table, int k = 5);

/// Column-wise concatenation. With `min_max` every column is rescaled to
/// [0, 1]; constant columns become 0.
FeatureMatrix assemble_features(const std::vector<FeatureMatrix>& parts, bool min_max = false);

/// Morphology + GLCM + crowdedness for every entity of `labels`.
FeatureMatrix extract_all(const Image& img, const LabelMap& labels, const GlcmParams& glcm_params = {},
                          int crowd_k = 5, bool min_max = false);

/// CSV with header id,<names...>, 17 significant digits.
void write_feature_csv(const FeatureMatrix& fm, const std::filesystem::path& path);
std::string feature_csv(const FeatureMatrix& fm);
FeatureMatrix read_feature_csv(const std::filesystem::path& path);

/// External per-entity features keyed by id; ids must match `table` exactly.
FeatureMatrix load_external_features(const std::filesystem::path& path, const EntityTable& table);

}  // namespace histograph::features
