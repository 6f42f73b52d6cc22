#include "histograph/stain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "histograph/stats.hpp"

namespace histograph::stain {

namespace {

using json = nlohmann::json;
using Mat32 = Eigen::Matrix<double, 3, 2>;

constexpr int kMinTissuePixels = 100;
constexpr double kDegenerateEigenRatio = 1e-6;
constexpr double kParallelSine = 1e-6;
constexpr int kMaxCoordinateSweeps = 50;
constexpr int kMaxBacktracks = 30;

const std::array<double, 256>& od_table() {
    static const std::array<double, 256> table = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = -std::log10((i + 1.0) / 256.0);
        return t;
    }();
    return table;
}

Eigen::Vector3d orient_non_negative(Eigen::Vector3d v) {
    if (v.sum() < 0.0) v = -v;
    v = v.cwiseMax(0.0);
    const double n = v.norm();
    if (n <= 0.0) {
        throw StainEstimationError(StainEstimationError::Kind::DegenerateCovariance,
                                   "stain direction collapsed to zero");
    }
    return v / n;
}

}  // namespace

double intensity_to_od(std::uint8_t intensity) { return od_table()[intensity]; }

std::uint8_t od_to_intensity(double od) {
    const double v = 256.0 * std::pow(10.0, -od) - 1.0;
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

OdField rgb_to_od(const Image& img) {
    OdField od{img.height(), img.width(), std::vector<double>(img.data().size())};
    auto src = img.data();
    for (std::size_t i = 0; i < src.size(); ++i) od.values[i] = intensity_to_od(src[i]);
    return od;
}

Image od_to_rgb(const OdField& od) {
    std::vector<std::uint8_t> data(od.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = od_to_intensity(std::max(0.0, od.values[i]));
    return Image::from_interleaved(od.height, od.width, std::move(data));
}

Mat32 StainMatrix::matrix() const {
    Mat32 m;
    m.col(0) = hematoxylin;
    m.col(1) = eosin;
    return m;
}

StainMatrix StainMatrix::from_columns(const Eigen::Vector3d& h, const Eigen::Vector3d& e) {
    auto check = [](const Eigen::Vector3d& v, const char* name) {
        if (!v.allFinite() || v.minCoeff() < -1e-12 || v.norm() <= 0.0) {
            throw InvalidArgument(std::string("stain vector ") + name +
                                  " must be finite, non-negative and non-zero");
        }
        return Eigen::Vector3d(v.cwiseMax(0.0) / v.cwiseMax(0.0).norm());
    };
    return StainMatrix{check(h, "hematoxylin"), check(e, "eosin")};
}

StainProfile default_profile() {
    StainProfile p;
    p.stains = StainMatrix::from_columns(Eigen::Vector3d(0.5626, 0.7201, 0.4062),
                                         Eigen::Vector3d(0.2159, 0.8012, 0.5581));
    p.max_conc = {1.9705, 1.0308};
    return p;
}

Method parse_method(const std::string& name) {
    if (name == "macenko") return Method::Macenko;
    if (name == "vahadane") return Method::Vahadane;
    throw InvalidArgument("unknown stain method \"" + name + "\" (expected macenko|vahadane)");
}

std::string method_name(Method m) { return m == Method::Macenko ? "macenko" : "vahadane"; }

Eigen::Matrix3Xd tissue_od(const Image& img, double beta) {
    auto src = img.data();
    const std::size_t n = img.pixel_count();
    std::size_t kept = 0;
    Eigen::Matrix3Xd od(3, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double r = intensity_to_od(src[3 * i]);
        const double g = intensity_to_od(src[3 * i + 1]);
        const double b = intensity_to_od(src[3 * i + 2]);
        if (r > beta && g > beta && b > beta) {
            od.col(static_cast<Eigen::Index>(kept++)) << r, g, b;
        }
    }
    od.conservativeResize(3, static_cast<Eigen::Index>(kept));
    return od;
}

double angle_degrees(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

StainMatrix label_stains(const Eigen::Vector3d& first, const Eigen::Vector3d& second) {
    if (second(0) > first(0)) return StainMatrix{second, first};
    return StainMatrix{first, second};
}

StainMatrix macenko_from_od(const Eigen::Matrix3Xd& od, double alpha) {
    if (od.cols() < kMinTissuePixels) {
        throw StainEstimationError(StainEstimationError::Kind::TooFewTissuePixels,
                                   "need at least " + std::to_string(kMinTissuePixels) +
                                       " tissue pixels, found " + std::to_string(od.cols()));
    }
    const Eigen::Vector3d mean = od.rowwise().mean();
    const Eigen::Matrix3Xd centered = od.colwise() - mean;
    const Eigen::Matrix3d cov = centered * centered.transpose() / static_cast<double>(od.cols() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
    if (!(evals(2) > 1e-14) || evals(1) <= kDegenerateEigenRatio * evals(2)) {
        throw StainEstimationError(StainEstimationError::Kind::DegenerateCovariance,
                                   "OD covariance has rank < 2");
    }
    Eigen::Vector3d v1 = eig.eigenvectors().col(2);
    Eigen::Vector3d v2 = eig.eigenvectors().col(1);
    if (v1.sum() < 0) v1 = -v1;
    if (v2.sum() < 0) v2 = -v2;

    std::vector<double> phi(static_cast<std::size_t>(od.cols()));
    for (Eigen::Index i = 0; i < od.cols(); ++i) {
        phi[static_cast<std::size_t>(i)] = std::atan2(od.col(i).dot(v2), od.col(i).dot(v1));
    }
    const double lo = percentile(phi, alpha);
    const double hi = percentile(std::move(phi), 100.0 - alpha);
    const Eigen::Vector3d low_dir = orient_non_negative(v1 * std::cos(lo) + v2 * std::sin(lo));
    const Eigen::Vector3d high_dir = orient_non_negative(v1 * std::cos(hi) + v2 * std::sin(hi));
    return label_stains(low_dir, high_dir);
}

StainMatrix estimate_stains_macenko(const Image& img, const StainParams& params) {
    return macenko_from_od(tissue_od(img, params.beta), params.alpha);
}

namespace {

double vahadane_objective(const Eigen::Matrix3Xd& v, const Mat32& w, const Eigen::Matrix2Xd& h,
                          double lambda) {
    return (v - w * h).squaredNorm() + lambda * h.sum();
}

// Coordinate-descent non-negative lasso, one pixel (column) at a time.
void update_concentrations(const Eigen::Matrix3Xd& v, const Mat32& w, Eigen::Matrix2Xd& h,
                           double lambda) {
    const Eigen::Matrix2d gram = w.transpose() * w;
    const Eigen::Matrix2Xd wtv = w.transpose() * v;
    const double half_lambda = 0.5 * lambda;
    for (Eigen::Index p = 0; p < v.cols(); ++p) {
        double h0 = h(0, p), h1 = h(1, p);
        for (int sweep = 0; sweep < kMaxCoordinateSweeps; ++sweep) {
            const double n0 = std::max(0.0, (wtv(0, p) - gram(0, 1) * h1 - half_lambda) / gram(0, 0));
            const double n1 = std::max(0.0, (wtv(1, p) - gram(1, 0) * n0 - half_lambda) / gram(1, 1));
            const double change = std::abs(n0 - h0) + std::abs(n1 - h1);
            h0 = n0;
            h1 = n1;
            if (change < 1e-12) break;
        }
        h(0, p) = h0;
        h(1, p) = h1;
    }
}

}  // namespace

VahadaneResult vahadane_factorize(const Eigen::Matrix3Xd& od, const StainMatrix& init,
                                  const StainParams& params) {
    if (params.lambda < 0.0) throw InvalidArgument("vahadane: lambda must be >= 0");
    if (params.iters < 1) throw InvalidArgument("vahadane: iters must be >= 1");
    Mat32 w = init.matrix();
    Eigen::Matrix2Xd h = Eigen::Matrix2Xd::Zero(2, od.cols());
    update_concentrations(od, w, h, params.lambda);

    VahadaneResult result;
    double f = vahadane_objective(od, w, h, params.lambda);
    result.objective.push_back(f);

    for (int it = 0; it < params.iters; ++it) {
        const double f_prev = f;

        // Projected gradient on W, renormalizing columns and rescaling H so
        // that the product W H is unchanged by the normalization. The
        // Newton-scaled direction grad (HH^T)^-1 / 2 is tried first; the
        // plain gradient with step 1/L is the fallback.
        const Mat32 vht = od * h.transpose();
        const Eigen::Matrix2d hht = h * h.transpose();
        const Mat32 grad = -2.0 * (vht - w * hht);
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(hht);
        const auto try_direction = [&](const Mat32& dir, double step) {
            for (int trial = 0; trial < kMaxBacktracks; ++trial, step *= 0.5) {
                Mat32 w_try = (w - step * dir).cwiseMax(0.0);
                const Eigen::RowVector2d norms = w_try.colwise().norm();
                if (norms.minCoeff() < 1e-12) continue;
                Eigen::Matrix2Xd h_try = h;
                for (int k = 0; k < 2; ++k) {
                    w_try.col(k) /= norms(k);
                    h_try.row(k) *= norms(k);
                }
                const double f_try = vahadane_objective(od, w_try, h_try, params.lambda);
                if (f_try <= f) {
                    w = w_try;
                    h = std::move(h_try);
                    f = f_try;
                    return true;
                }
            }
            return false;
        };
        bool moved = false;
        if (eig.eigenvalues()(0) > 1e-12 * eig.eigenvalues()(1)) {
            moved = try_direction(0.5 * grad * hht.inverse(), 1.0);
        }
        if (!moved && eig.eigenvalues()(1) > 0.0) try_direction(grad, 0.5 / eig.eigenvalues()(1));

        update_concentrations(od, w, h, params.lambda);
        f = vahadane_objective(od, w, h, params.lambda);
        if (!std::isfinite(f)) throw NumericalError("vahadane: objective is not finite");
        if (f > f_prev + 1e-6 * std::max(1.0, std::abs(f_prev))) {
            throw NumericalError("vahadane: objective increased from " + std::to_string(f_prev) +
                                 " to " + std::to_string(f));
        }
        result.objective.push_back(f);
        result.iterations = it + 1;
        const double rel = (f_prev - f) / std::max(f_prev, 1e-300);
        if (rel < params.tolerance) break;
    }

    const Eigen::Vector3d c0 = w.col(0), c1 = w.col(1);
    result.stains = label_stains(c0, c1);
    if (result.stains.hematoxylin != c0) h.row(0).swap(h.row(1));
    result.concentrations = std::move(h);
    return result;
}

StainMatrix estimate_stains_vahadane(const Image& img, const StainParams& params) {
    const Eigen::Matrix3Xd od = tissue_od(img, params.beta);
    const StainMatrix init = macenko_from_od(od, params.alpha);
    return vahadane_factorize(od, init, params).stains;
}

StainMatrix estimate_stains(const Image& img, Method method, const StainParams& params) {
    return method == Method::Macenko ? estimate_stains_macenko(img, params)
                                     : estimate_stains_vahadane(img, params);
}

ConcentrationMap fit_concentrations(const Image& img, const StainMatrix& stains) {
    const Mat32 w = stains.matrix();
    const Eigen::Matrix2d gram = w.transpose() * w;
    const double cosine = std::abs(gram(0, 1)) / std::sqrt(gram(0, 0) * gram(1, 1));
    if (std::sqrt(std::max(0.0, 1.0 - cosine * cosine)) < kParallelSine) {
        throw StainEstimationError(StainEstimationError::Kind::SingularStainMatrix,
                                   "stain vectors are parallel");
    }
    const Eigen::Matrix<double, 2, 3> pinv = gram.inverse() * w.transpose();
    ConcentrationMap out{img.height(), img.width(), std::vector<double>(2 * img.pixel_count())};
    auto src = img.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const Eigen::Vector3d od(intensity_to_od(src[3 * i]), intensity_to_od(src[3 * i + 1]),
                                 intensity_to_od(src[3 * i + 2]));
        const Eigen::Vector2d c = pinv * od;
        out.values[2 * i] = std::max(0.0, c(0));
        out.values[2 * i + 1] = std::max(0.0, c(1));
    }
    return out;
}

namespace {

// 99th percentile of each stain over tissue pixels (any channel above beta);
// all pixels when there is no tissue.
std::array<double, 2> robust_max_concentration(const Image& img, const ConcentrationMap& conc,
                                               double beta) {
    std::vector<double> c0, c1;
    auto src = img.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double m = std::max({intensity_to_od(src[3 * i]), intensity_to_od(src[3 * i + 1]),
                                   intensity_to_od(src[3 * i + 2])});
        if (m > beta) {
            c0.push_back(conc.values[2 * i]);
            c1.push_back(conc.values[2 * i + 1]);
        }
    }
    if (c0.empty()) {
        for (std::size_t i = 0; i < img.pixel_count(); ++i) {
            c0.push_back(conc.values[2 * i]);
            c1.push_back(conc.values[2 * i + 1]);
        }
    }
    return {percentile(std::move(c0), 99.0), percentile(std::move(c1), 99.0)};
}

}  // namespace

StainProfile estimate_profile(const Image& img, Method method, const StainParams& params) {
    StainProfile p;
    p.stains = estimate_stains(img, method, params);
    p.max_conc = robust_max_concentration(img, fit_concentrations(img, p.stains), params.beta);
    return p;
}

Image normalize(const Image& img, Method method, const std::optional<StainProfile>& reference,
                const StainParams& params) {
    auto src = img.data();
    if (std::all_of(src.begin(), src.end(), [](std::uint8_t v) { return v == 255; })) return img;

    const StainProfile ref = reference.value_or(default_profile());
    StainProfile source;
    source.stains = estimate_stains(img, method, params);
    const ConcentrationMap conc = fit_concentrations(img, source.stains);
    source.max_conc = robust_max_concentration(img, conc, params.beta);

    std::array<double, 2> scale{1.0, 1.0};
    for (int k = 0; k < 2; ++k) {
        if (source.max_conc[k] > 0.0) scale[k] = ref.max_conc[k] / source.max_conc[k];
    }
    const Mat32 w = ref.stains.matrix();
    OdField od{img.height(), img.width(), std::vector<double>(src.size())};
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const Eigen::Vector3d v =
            w * Eigen::Vector2d(conc.values[2 * i] * scale[0], conc.values[2 * i + 1] * scale[1]);
        od.values[3 * i] = v(0);
        od.values[3 * i + 1] = v(1);
        od.values[3 * i + 2] = v(2);
    }
    return od_to_rgb(od);
}

std::string profile_to_json(const StainProfile& profile) {
    json j;
    const auto& h = profile.stains.hematoxylin;
    const auto& e = profile.stains.eosin;
    j["stain_matrix"] = {{h(0), h(1), h(2)}, {e(0), e(1), e(2)}};
    j["max_conc"] = {profile.max_conc[0], profile.max_conc[1]};
    return j.dump(2);
}

StainProfile profile_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("profile", std::string("invalid JSON: ") + e.what());
    }
    if (!j.contains("stain_matrix") || !j["stain_matrix"].is_array() || j["stain_matrix"].size() != 2) {
        throw SchemaError("stain_matrix", "expected two 3-vectors");
    }
    if (!j.contains("max_conc") || !j["max_conc"].is_array() || j["max_conc"].size() != 2) {
        throw SchemaError("max_conc", "expected two numbers");
    }
    std::array<Eigen::Vector3d, 2> cols;
    for (int k = 0; k < 2; ++k) {
        const auto& row = j["stain_matrix"][k];
        if (!row.is_array() || row.size() != 3) throw SchemaError("stain_matrix", "expected 3 components");
        for (int c = 0; c < 3; ++c) {
            if (!row[c].is_number()) throw SchemaError("stain_matrix", "non-numeric component");
            cols[k](c) = row[c].get<double>();
        }
    }
    StainProfile p;
    p.stains = StainMatrix::from_columns(cols[0], cols[1]);
    for (int k = 0; k < 2; ++k) {
        if (!j["max_conc"][k].is_number()) throw SchemaError("max_conc", "non-numeric value");
        p.max_conc[k] = j["max_conc"][k].get<double>();
        if (!(p.max_conc[k] > 0.0)) throw SchemaError("max_conc", "values must be > 0");
    }
    return p;
}

}  // namespace histograph::stain
