#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "histograph/image.hpp"

namespace histograph::bench {

struct BenchOp {
    std::string module;
    std::string op;
    std::function<void(const Image&)> run;
};

/// stain/macenko, stain/vahadane, tissue_mask/detect, nuclei/detect,
/// superpixel/slic, graph/knn.
std::vector<BenchOp> default_ops();

/// Picks ops by "module/op" or bare op name; an empty selection keeps all.
std::vector<BenchOp> select_ops(const std::vector<std::string>& names);

struct BenchRow {
    std::string module;
    std::string op;
    int side = 0;
    double seconds = 0.0;  // median over repetitions
    int reps = 0;
};

/// Times every op on a seeded pseudo-tissue image per side length.
std::vector<BenchRow> run_benchmark(const std::vector<int>& sides, const std::vector<BenchOp>& ops, int reps,
                                    std::uint64_t seed = 0);

/// Header "module,op,side,seconds".
std::string benchmark_csv(const std::vector<BenchRow>& rows);

/// Least-squares slope of log(seconds) against log(pixels).
double scaling_exponent(const std::vector<std::pair<double, double>>& pixels_seconds);

}  // namespace histograph::bench
