#pragma once

#include <cstdint>
#include <vector>

#include "histograph/gnn.hpp"

namespace histograph::gnn {

struct TrainConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 100;
    int batch_size = 8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Sample {
    const graph::EntityGraph* graph = nullptr;
    int label = 0;
};

struct HactSample {
    const graph::EntityGraph* cells = nullptr;
    const graph::EntityGraph* tissue = nullptr;
    const std::vector<int>* assignment = nullptr;
    int label = 0;
};

struct TrainResult {
    std::vector<double> loss;  // mean cross-entropy per epoch
};

/// Adam over a fixed list of tensors.
class Adam {
public:
    Adam(const TrainConfig& cfg, const std::vector<Eigen::MatrixXd*>& params);
    void step(const std::vector<const Eigen::MatrixXd*>& grads);

private:
    TrainConfig cfg_;
    std::vector<Eigen::MatrixXd*> params_;
    std::vector<Eigen::MatrixXd> m_, v_;
    long long t_ = 0;
};

/// Mini-batch Adam on mean cross-entropy. Fills in the PNA degree
/// normalizer from the training graphs when it is unset. Throws
/// NumericalError on a non-finite loss.
TrainResult train(GnnModel& model, const std::vector<Sample>& data, const TrainConfig& cfg);
TrainResult train_hact(HactModel& model, const std::vector<HactSample>& data, const TrainConfig& cfg);

double accuracy(const GnnModel& model, const std::vector<Sample>& data);

}  // namespace histograph::gnn
