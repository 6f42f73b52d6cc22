#include "histograph/benchmark.hpp"

#include <chrono>
#include <cmath>

#include "csv.hpp"
#include "histograph/error.hpp"
#include "histograph/features.hpp"
#include "histograph/graph.hpp"
#include "histograph/nuclei.hpp"
#include "histograph/stain.hpp"
#include "histograph/stats.hpp"
#include "histograph/superpixel.hpp"
#include "histograph/synth.hpp"
#include "histograph/tissue_mask.hpp"

namespace histograph::bench {

std::vector<BenchOp> default_ops() {
    return {
        {"stain", "macenko", [](const Image& img) { stain::normalize(img, stain::Method::Macenko, std::nullopt); }},
        {"stain", "vahadane", [](const Image& img) { stain::normalize(img, stain::Method::Vahadane, std::nullopt); }},
        {"tissue_mask", "detect", [](const Image& img) { tissue::detect_tissue(img); }},
        {"nuclei", "detect", [](const Image& img) { nuclei::detect_nuclei(img); }},
        {"superpixel", "slic", [](const Image& img) { superpixel::slic(img); }},
        {"graph", "knn",
         [](const Image& img) {
             const auto labels = nuclei::detect_nuclei(img).labels;
             const auto table = entity_table(labels);
             features::FeatureMatrix empty;
             for (const auto& e : table) empty.ids.push_back(e.id);
             empty.values.resize(static_cast<Eigen::Index>(table.size()), 0);
             graph::build_knn_graph(table, empty);
         }},
    };
}

std::vector<BenchOp> select_ops(const std::vector<std::string>& names) {
    auto all = default_ops();
    if (names.empty()) return all;
    std::vector<BenchOp> out;
    for (const auto& name : names) {
        bool found = false;
        for (const auto& op : all) {
            if (name == op.op || name == op.module + "/" + op.op) {
                out.push_back(op);
                found = true;
                break;
            }
        }
        if (!found) throw InvalidArgument("benchmark: unknown op \"" + name + "\"");
    }
    return out;
}

std::vector<BenchRow> run_benchmark(const std::vector<int>& sides, const std::vector<BenchOp>& ops, int reps,
                                    std::uint64_t seed) {
    if (reps < 1) throw InvalidArgument("benchmark: reps must be >= 1");
    std::vector<BenchRow> rows;
    for (int side : sides) {
        if (side < 64) throw InvalidArgument("benchmark: sides must be >= 64, got " + std::to_string(side));
        const Image img = synth::pseudo_tissue(side, seed);
        for (const auto& op : ops) {
            std::vector<double> times;
            for (int r = 0; r < reps; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                op.run(img);
                const auto t1 = std::chrono::steady_clock::now();
                times.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
            rows.push_back({op.module, op.op, side, median(std::move(times)), reps});
        }
    }
    return rows;
}

std::string benchmark_csv(const std::vector<BenchRow>& rows) {
    std::string out = "module,op,side,seconds\n";
    for (const auto& r : rows) {
        out += r.module + "," + r.op + "," + std::to_string(r.side) + "," + csv::format_double(r.seconds) + "\n";
    }
    return out;
}

double scaling_exponent(const std::vector<std::pair<double, double>>& pts) {
    if (pts.size() < 2) throw InvalidArgument("scaling_exponent: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [px, sec] : pts) {
        const double x = std::log(px), y = std::log(sec);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = double(pts.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace histograph::bench
