#include "histograph/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include "csv.hpp"
#include "histograph/error.hpp"
#include "histograph/filters.hpp"
#include "histograph/image_io.hpp"

namespace histograph::features {

void FeatureMatrix::validate() const {
    if (static_cast<Eigen::Index>(ids.size()) != values.rows()) {
        throw InvalidArgument("feature matrix: " + std::to_string(ids.size()) + " ids for " +
                              std::to_string(values.rows()) + " rows");
    }
    if (static_cast<Eigen::Index>(names.size()) != values.cols()) {
        throw InvalidArgument("feature matrix: " + std::to_string(names.size()) + " names for " +
                              std::to_string(values.cols()) + " columns");
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw InvalidArgument("feature matrix: duplicate column \"" + n + "\"");
    }
    if (!values.allFinite()) throw NumericalError("feature matrix contains NaN or Inf");
}

namespace {

// Padded binary crop of one entity: bbox plus a one-pixel background frame.
GrayImage entity_mask(const LabelMap& labels, const Entity& e) {
    const int h = e.bbox.r1 - e.bbox.r0 + 3, w = e.bbox.c1 - e.bbox.c0 + 3;
    GrayImage mask(h, w);
    for (int r = e.bbox.r0; r <= e.bbox.r1; ++r) {
        for (int c = e.bbox.c0; c <= e.bbox.c1; ++c) {
            if (labels.at(r, c) == e.id) mask.at(r - e.bbox.r0 + 1, c - e.bbox.c0 + 1) = 1;
        }
    }
    return mask;
}

constexpr int kDr[8] = {0, -1, -1, -1, 0, 1, 1, 1};  // W, NW, N, NE, E, SE, S, SW
constexpr int kDc[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

int direction_of(int dr, int dc) {
    for (int k = 0; k < 8; ++k) {
        if (kDr[k] == dr && kDc[k] == dc) return k;
    }
    return -1;
}

double trace_component(const GrayImage& mask, const LabelMap& comps, std::int32_t id, int sr, int sc,
                       std::int64_t area) {
    const auto inside = [&](int r, int c) {
        return r >= 0 && c >= 0 && r < mask.height() && c < mask.width() && comps.at(r, c) == id;
    };
    int pr = sr, pc = sc;
    int back = 0;  // the west neighbour of the first raster pixel is background
    int first_r = -1, first_c = -1;
    double length = 0.0;
    const std::int64_t cap = 8 * area + 16;
    for (std::int64_t step = 0; step < cap; ++step) {
        int next = -1;
        for (int k = 1; k <= 8; ++k) {
            const int d = (back + k) % 8;
            if (inside(pr + kDr[d], pc + kDc[d])) {
                next = d;
                break;
            }
        }
        if (next < 0) return 0.0;  // isolated pixel
        const int nr = pr + kDr[next], nc = pc + kDc[next];
        if (step == 0) {
            first_r = nr;
            first_c = nc;
        } else if (pr == sr && pc == sc && nr == first_r && nc == first_c) {
            break;
        }
        const int prev = (next + 7) % 8;
        const int br = pr + kDr[prev], bc = pc + kDc[prev];
        length += (next % 2 == 1) ? std::numbers::sqrt2 : 1.0;
        back = direction_of(br - nr, bc - nc);
        pr = nr;
        pc = nc;
    }
    return length;
}

}  // namespace

double contour_perimeter(const GrayImage& mask) {
    const LabelMap comps = connected_components(mask, 8);
    std::vector<std::int64_t> area(static_cast<std::size_t>(comps.max_label()) + 1, 0);
    for (auto l : comps.labels()) ++area[static_cast<std::size_t>(l)];
    std::vector<char> done(area.size(), 0);
    double total = 0.0;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            const auto id = comps.at(r, c);
            if (id == 0 || done[id]) continue;
            done[id] = 1;
            total += trace_component(mask, comps, id, r, c, area[id]);
        }
    }
    return total;
}

int euler_number(const GrayImage& mask) {
    const auto fg = [&](int r, int c) {
        return r >= 0 && c >= 0 && r < mask.height() && c < mask.width() && mask.at(r, c) != 0;
    };
    long long q1 = 0, q3 = 0, qd = 0;
    for (int r = -1; r < mask.height(); ++r) {
        for (int c = -1; c < mask.width(); ++c) {
            const bool a = fg(r, c), b = fg(r, c + 1), d = fg(r + 1, c), e = fg(r + 1, c + 1);
            const int n = a + b + d + e;
            if (n == 1) ++q1;
            else if (n == 3) ++q3;
            else if (n == 2 && a == e) ++qd;
        }
    }
    return static_cast<int>((q1 - q3 - 2 * qd) / 4);
}

std::vector<std::pair<long long, long long>> convex_hull(std::vector<std::pair<long long, long long>> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    const auto cross = [](const auto& o, const auto& a, const auto& b) {
        return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<long long, long long>> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

namespace {

struct HullInfo {
    std::int64_t area = 0;  // pixel centres inside or on the hull
    double perimeter = 0.0;
};

HullInfo hull_info(const GrayImage& mask) {
    std::vector<std::pair<long long, long long>> pts;
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) {
            if (mask.at(r, c)) pts.emplace_back(r, c);
        }
    }
    const auto hull = convex_hull(pts);
    HullInfo info;
    const auto seg = [](const auto& a, const auto& b) {
        return std::hypot(double(a.first - b.first), double(a.second - b.second));
    };
    if (hull.size() == 1) {
        info.area = 1;
        return info;
    }
    if (hull.size() == 2) {
        // degenerate hull: the pixels on the segment
        const auto [a, b] = std::pair{hull[0], hull[1]};
        const long long g = std::gcd(std::abs(b.first - a.first), std::abs(b.second - a.second));
        info.area = g + 1;
        info.perimeter = 2.0 * seg(a, b);
        return info;
    }
    for (std::size_t i = 0; i < hull.size(); ++i) info.perimeter += seg(hull[i], hull[(i + 1) % hull.size()]);
    long long rmin = hull[0].first, rmax = hull[0].first;
    for (const auto& p : hull) {
        rmin = std::min(rmin, p.first);
        rmax = std::max(rmax, p.first);
    }
    for (long long r = rmin; r <= rmax; ++r) {
        for (long long c = 0; c < mask.width(); ++c) {
            bool inside = true;
            for (std::size_t i = 0; i < hull.size() && inside; ++i) {
                const auto& a = hull[i];
                const auto& b = hull[(i + 1) % hull.size()];
                inside = (b.first - a.first) * (c - a.second) - (b.second - a.second) * (r - a.first) >= 0;
            }
            info.area += inside;
        }
    }
    return info;
}

}  // namespace

FeatureMatrix morphology_features(const LabelMap& labels, const EntityTable& table) {
    FeatureMatrix fm;
    fm.names = {"area",          "convex_area",       "eccentricity",     "equivalent_diameter",
                "euler_number",  "major_axis_length", "minor_axis_length", "orientation",
                "perimeter",     "solidity",          "convex_hull_perimeter", "roughness",
                "shape_factor",  "ellipticity",       "roundness"};
    fm.values.resize(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(fm.names.size()));
    for (std::size_t i = 0; i < table.size(); ++i) {
        const Entity& e = table[i];
        fm.ids.push_back(e.id);
        const GrayImage mask = entity_mask(labels, e);

        double n = 0, sr = 0, sc = 0;
        for (int r = 0; r < mask.height(); ++r) {
            for (int c = 0; c < mask.width(); ++c) {
                if (!mask.at(r, c)) continue;
                n += 1;
                sr += r;
                sc += c;
            }
        }
        if (n == 0) throw InvalidArgument("morphology: entity " + std::to_string(e.id) + " not in label map");
        const double mr = sr / n, mc = sc / n;
        double mrr = 0, mcc = 0, mrc = 0;
        for (int r = 0; r < mask.height(); ++r) {
            for (int c = 0; c < mask.width(); ++c) {
                if (!mask.at(r, c)) continue;
                mrr += (r - mr) * (r - mr);
                mcc += (c - mc) * (c - mc);
                mrc += (r - mr) * (c - mc);
            }
        }
        mrr /= n;
        mcc /= n;
        mrc /= n;
        const double half_sum = 0.5 * (mrr + mcc);
        const double root = std::sqrt(0.25 * (mrr - mcc) * (mrr - mcc) + mrc * mrc);
        const double l1 = half_sum + root;
        const double l2 = std::max(0.0, half_sum - root);
        const double major = 4.0 * std::sqrt(l1);
        const double minor = 4.0 * std::sqrt(l2);
        const double eccentricity = l1 > 0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
        const double orientation = l1 > 0 ? 0.5 * std::atan2(2.0 * mrc, mrr - mcc) : 0.0;

        const HullInfo hull = hull_info(mask);
        const double perimeter = contour_perimeter(mask);
        const double area = n;
        const double pi = std::numbers::pi;

        auto row = fm.values.row(static_cast<Eigen::Index>(i));
        row << area, double(hull.area), eccentricity, std::sqrt(4.0 * area / pi), double(euler_number(mask)),
            major, minor, orientation, perimeter, area / double(hull.area), hull.perimeter,
            hull.perimeter > 0 ? perimeter / hull.perimeter : 1.0,
            perimeter > 0 ? 4.0 * pi * area / (perimeter * perimeter) : 1.0, major > 0 ? minor / major : 1.0,
            major > 0 ? 4.0 * area / (pi * major * major) : 1.0;
    }
    fm.validate();
    return fm;
}

void GlcmParams::validate() const {
    if (levels < 2 || levels > 256) throw InvalidArgument("glcm: levels must lie in [2, 256]");
    if (offsets.empty()) throw InvalidArgument("glcm: offsets must not be empty");
}

namespace {

Eigen::MatrixXd glcm_in_box(const GrayImage& gray, const LabelMap& labels, std::int32_t id,
                            const BoundingBox& box, std::pair<int, int> offset, const GlcmParams& params) {
    const int g = params.levels;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g, g);
    const auto level = [&](int r, int c) { return gray.at(r, c) * g / 256; };
    for (int r = box.r0; r <= box.r1; ++r) {
        for (int c = box.c0; c <= box.c1; ++c) {
            if (labels.at(r, c) != id) continue;
            const int r2 = r + offset.first, c2 = c + offset.second;
            if (r2 < 0 || c2 < 0 || r2 >= labels.height() || c2 >= labels.width()) continue;
            if (labels.at(r2, c2) != id) continue;
            const int i = level(r, c), j = level(r2, c2);
            m(i, j) += 1.0;
            if (params.symmetric) m(j, i) += 1.0;
        }
    }
    if (params.normalize) {
        const double total = m.sum();
        if (total > 0) m /= total;
    }
    return m;
}

}  // namespace

Eigen::MatrixXd glcm(const GrayImage& gray, const LabelMap& labels, std::int32_t id, std::pair<int, int> offset,
                     const GlcmParams& params) {
    params.validate();
    return glcm_in_box(gray, labels, id, {0, 0, labels.height() - 1, labels.width() - 1}, offset, params);
}

GlcmStats glcm_stats(const Eigen::MatrixXd& p) {
    GlcmStats s;
    double mu = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) mu += double(i) * p.row(i).sum();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            const double v = p(i, j);
            const double d = double(i - j);
            s.contrast += v * d * d;
            s.dissimilarity += v * std::abs(d);
            s.homogeneity += v / (1.0 + d * d);
            s.asm_ += v * v;
            s.dispersion += v * (double(i) - mu) * (double(i) - mu);
        }
    }
    s.energy = std::sqrt(s.asm_);
    return s;
}

FeatureMatrix glcm_features(const Image& img, const LabelMap& labels, const GlcmParams& params) {
    params.validate();
    if (img.height() != labels.height() || img.width() != labels.width()) {
        throw InvalidArgument("glcm: label map size does not match the image");
    }
    const GrayImage gray = to_gray(img);
    const EntityTable table = entity_table(labels);
    FeatureMatrix fm;
    fm.names = {"glcm_contrast", "glcm_dissimilarity", "glcm_homogeneity", "glcm_asm",
                "glcm_energy",   "glcm_dispersion",    "glcm_empty"};
    fm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.size()), 7);
    for (std::size_t i = 0; i < table.size(); ++i) {
        const Entity& e = table[i];
        fm.ids.push_back(e.id);
        GlcmStats mean;
        int used = 0;
        for (const auto& off : params.offsets) {
            const Eigen::MatrixXd m = glcm_in_box(gray, labels, e.id, e.bbox, off, params);
            if (m.sum() <= 0.0) continue;
            const GlcmStats s = glcm_stats(params.normalize ? m : Eigen::MatrixXd(m / m.sum()));
            mean.contrast += s.contrast;
            mean.dissimilarity += s.dissimilarity;
            mean.homogeneity += s.homogeneity;
            mean.asm_ += s.asm_;
            mean.energy += s.energy;
            mean.dispersion += s.dispersion;
            ++used;
        }
        auto row = fm.values.row(static_cast<Eigen::Index>(i));
        if (used == 0) {
            row(6) = 1.0;
            continue;
        }
        row << mean.contrast / used, mean.dissimilarity / used, mean.homogeneity / used, mean.asm_ / used,
            mean.energy / used, mean.dispersion / used, 0.0;
    }
    fm.validate();
    return fm;
}

FeatureMatrix crowdedness_features(const EntityTable& table, int k) {
    if (table.size() < 2) throw InvalidArgument("crowdedness: need at least 2 entities");
    if (k < 1) throw InvalidArgument("crowdedness: k must be >= 1");
    const std::size_t n = table.size();
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
    FeatureMatrix fm;
    fm.names = {"crowd_mean", "crowd_var"};
    fm.values.resize(static_cast<Eigen::Index>(n), 2);
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
        fm.ids.push_back(table[i].id);
        d.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            d.push_back(std::hypot(table[i].centroid.row - table[j].centroid.row,
                                   table[i].centroid.col - table[j].centroid.col));
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
        double mean = 0.0;
        for (std::size_t j = 0; j < kk; ++j) mean += d[j];
        mean /= double(kk);
        double var = 0.0;
        for (std::size_t j = 0; j < kk; ++j) var += (d[j] - mean) * (d[j] - mean);
        var /= double(kk);
        fm.values(static_cast<Eigen::Index>(i), 0) = mean;
        fm.values(static_cast<Eigen::Index>(i), 1) = var;
    }
    return fm;
}

FeatureMatrix assemble_features(const std::vector<FeatureMatrix>& parts, bool min_max) {
    FeatureMatrix out;
    bool have_rows = false;
    for (const auto& p : parts) {
        if (p.cols() == 0 && p.rows() == 0) continue;
        if (!have_rows) {
            out.ids = p.ids;
            out.values.resize(p.rows(), 0);
            have_rows = true;
        } else if (p.ids != out.ids) {
            throw InvalidArgument("assemble_features: row count or entity order differs between parts");
        }
        const Eigen::Index c0 = out.values.cols();
        out.values.conservativeResize(Eigen::NoChange, c0 + p.cols());
        out.values.rightCols(p.cols()) = p.values;
        out.names.insert(out.names.end(), p.names.begin(), p.names.end());
    }
    if (min_max) {
        for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
            auto col = out.values.col(c);
            if (col.size() == 0) continue;
            const double lo = col.minCoeff(), hi = col.maxCoeff();
            if (hi > lo) {
                col = (col.array() - lo) / (hi - lo);
            } else {
                col.setZero();
            }
        }
    }
    out.validate();
    return out;
}

FeatureMatrix extract_all(const Image& img, const LabelMap& labels, const GlcmParams& glcm_params, int crowd_k,
                          bool min_max) {
    const EntityTable table = entity_table(labels);
    std::vector<FeatureMatrix> parts{morphology_features(labels, table), glcm_features(img, labels, glcm_params)};
    if (table.size() >= 2) parts.push_back(crowdedness_features(table, crowd_k));
    else {
        FeatureMatrix zero;
        zero.ids = parts[0].ids;
        zero.names = {"crowd_mean", "crowd_var"};
        zero.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.size()), 2);
        parts.push_back(std::move(zero));
    }
    return assemble_features(parts, min_max);
}

std::string feature_csv(const FeatureMatrix& fm) {
    fm.validate();
    std::string out = "id";
    for (const auto& n : fm.names) out += "," + n;
    out += "\n";
    for (Eigen::Index r = 0; r < fm.rows(); ++r) {
        out += std::to_string(fm.ids[static_cast<std::size_t>(r)]);
        for (Eigen::Index c = 0; c < fm.cols(); ++c) out += "," + csv::format_double(fm.values(r, c));
        out += "\n";
    }
    return out;
}

void write_feature_csv(const FeatureMatrix& fm, const std::filesystem::path& path) {
    write_file(path, feature_csv(fm));
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
    const auto rows = csv::parse(read_file(path));
    if (rows.empty() || rows[0].empty() || rows[0][0] != "id") {
        throw SchemaError("id", "feature CSV must start with an id column");
    }
    FeatureMatrix fm;
    fm.names.assign(rows[0].begin() + 1, rows[0].end());
    fm.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(fm.names.size()));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != fm.names.size() + 1) {
            throw SchemaError("row " + std::to_string(i), "expected " + std::to_string(fm.names.size() + 1) + " cells");
        }
        fm.ids.push_back(static_cast<std::int32_t>(csv::parse_int(row[0], "id")));
        for (std::size_t c = 0; c < fm.names.size(); ++c) {
            fm.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(c)) =
                csv::parse_double(row[c + 1], fm.names[c]);
        }
    }
    fm.validate();
    return fm;
}

FeatureMatrix load_external_features(const std::filesystem::path& path, const EntityTable& table) {
    const FeatureMatrix raw = read_feature_csv(path);
    std::map<std::int32_t, Eigen::Index> row_of;
    for (std::size_t i = 0; i < raw.ids.size(); ++i) {
        if (!row_of.emplace(raw.ids[i], static_cast<Eigen::Index>(i)).second) {
            throw SchemaError("id", "duplicate id " + std::to_string(raw.ids[i]));
        }
    }
    FeatureMatrix fm;
    fm.names = raw.names;
    fm.values.resize(static_cast<Eigen::Index>(table.size()), raw.cols());
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto it = row_of.find(table[i].id);
        if (it == row_of.end()) throw SchemaError("id", "missing id " + std::to_string(table[i].id));
        fm.ids.push_back(table[i].id);
        fm.values.row(static_cast<Eigen::Index>(i)) = raw.values.row(it->second);
        row_of.erase(it);
    }
    if (!row_of.empty()) {
        throw SchemaError("id", "id " + std::to_string(row_of.begin()->first) + " is not an entity");
    }
    return fm;
}

}  // namespace histograph::features
