#include "histograph/train.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "histograph/error.hpp"
#include "histograph/random.hpp"

namespace histograph::gnn {

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw InvalidArgument("train: lr must be >= 0");
    if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw InvalidArgument("train: Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw InvalidArgument("train: adam_eps must be > 0");
}

Adam::Adam(const TrainConfig& cfg, const std::vector<Eigen::MatrixXd*>& params) : cfg_(cfg), params_(params) {
    for (const auto* p : params_) {
        m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
}

void Adam::step(const std::vector<const Eigen::MatrixXd*>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& g = *grads[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        *params_[i] -= (cfg_.lr * (m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + cfg_.adam_eps)).matrix();
    }
}

namespace {

std::vector<Eigen::MatrixXd*> pointers(GnnParams& p) {
    std::vector<Eigen::MatrixXd*> out;
    for (auto& [name, t] : p.tensors()) out.push_back(t);
    return out;
}

void accumulate(GnnParams& into, const GnnParams& g) {
    auto a = into.tensors();
    const auto b = g.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) *a[i].second += *b[i].second;
}

void check_label(int label, int classes) {
    if (label < 0 || label >= classes) {
        throw InvalidArgument("train: label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
}

void check_loss(double loss, int epoch, std::size_t sample) {
    if (!std::isfinite(loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                             std::to_string(sample));
    }
}

// One pass of shuffled mini-batches; `step` returns the loss of one sample
// and adds its gradient to the accumulators.
template <typename StepFn, typename ApplyFn>
TrainResult run_epochs(std::size_t n, const TrainConfig& cfg, StepFn step, ApplyFn apply) {
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            for (std::size_t i = start; i < end; ++i) {
                const double loss = step(order[i]);
                check_loss(loss, epoch, order[i]);
                total += loss;
            }
            apply(double(end - start));
        }
        result.loss.push_back(total / double(n));
    }
    return result;
}

}  // namespace

TrainResult train(GnnModel& model, const std::vector<Sample>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw InvalidArgument("train: empty dataset");
    for (const auto& s : data) check_label(s.label, model.config.num_classes);
    if (model.config.layer == LayerType::Pna && !(model.config.pna_delta > 0.0)) {
        std::vector<const graph::EntityGraph*> graphs;
        for (const auto& s : data) graphs.push_back(s.graph);
        model.config.pna_delta = degree_normalizer(graphs);
    }
    Adam adam(cfg, pointers(model.params));
    GnnParams acc = model.params.zeros_like();
    const auto step = [&](std::size_t i) {
        const ForwardCache cache = forward(model, *data[i].graph);
        const double loss = cross_entropy(cache.logits, data[i].label);
        accumulate(acc, backward(model, cache, cross_entropy_grad(cache.logits, data[i].label)).params);
        return loss;
    };
    const auto apply = [&](double batch) {
        std::vector<const Eigen::MatrixXd*> grads;
        for (auto* t : pointers(acc)) {
            *t /= batch;
            grads.push_back(t);
        }
        adam.step(grads);
        for (auto* t : pointers(acc)) t->setZero();
    };
    return run_epochs(data.size(), cfg, step, apply);
}

TrainResult train_hact(HactModel& model, const std::vector<HactSample>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw InvalidArgument("train: empty dataset");
    for (const auto& s : data) check_label(s.label, model.tissue.config.num_classes);
    const auto fill_delta = [&](GnnModel& m, bool cells) {
        if (m.config.layer != LayerType::Pna || m.config.pna_delta > 0.0) return;
        std::vector<const graph::EntityGraph*> graphs;
        for (const auto& s : data) graphs.push_back(cells ? s.cells : s.tissue);
        m.config.pna_delta = degree_normalizer(graphs);
    };
    fill_delta(model.cell, true);
    fill_delta(model.tissue, false);

    std::vector<Eigen::MatrixXd*> params = pointers(model.cell.params);
    for (auto* t : pointers(model.tissue.params)) params.push_back(t);
    Adam adam(cfg, params);
    GnnParams acc_cell = model.cell.params.zeros_like();
    GnnParams acc_tissue = model.tissue.params.zeros_like();
    const auto step = [&](std::size_t i) {
        const auto& s = data[i];
        const HactCache cache = hact_forward(model, *s.cells, *s.tissue, *s.assignment);
        const double loss = cross_entropy(cache.tissue.logits, s.label);
        const HactGradients g = hact_backward(model, cache, cross_entropy_grad(cache.tissue.logits, s.label));
        accumulate(acc_cell, g.cell.params);
        accumulate(acc_tissue, g.tissue.params);
        return loss;
    };
    const auto apply = [&](double batch) {
        std::vector<const Eigen::MatrixXd*> grads;
        auto cell = pointers(acc_cell), tissue = pointers(acc_tissue);
        cell.insert(cell.end(), tissue.begin(), tissue.end());
        for (auto* t : cell) {
            *t /= batch;
            grads.push_back(t);
        }
        adam.step(grads);
        for (auto* t : cell) t->setZero();
    };
    return run_epochs(data.size(), cfg, step, apply);
}

double accuracy(const GnnModel& model, const std::vector<Sample>& data) {
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& s : data) hits += predict(model, *s.graph).label == s.label;
    return double(hits) / double(data.size());
}

}  // namespace histograph::gnn
