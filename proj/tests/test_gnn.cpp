#include <doctest.h>

#include "histograph/gnn.hpp"
#include "histograph/train.hpp"
#include "support.hpp"

using namespace histograph;
using namespace histograph::gnn;
using support::MatrixXd;
using support::RowVectorXd;

namespace {

GnnModel identity_gin(int num_layers) {
    GnnConfig c;
    c.input_dim = 1;
    c.hidden = 1;
    c.num_layers = num_layers;
    c.mlp_depth = 1;
    c.head_depth = 0;
    GnnModel m = init_model(c, 0);
    for (auto& layer : m.params.layers) {
        layer[0].weight.setOnes();
        layer[0].bias.setZero();
    }
    return m;
}

graph::EntityGraph scalar_graph(int n, std::vector<graph::Edge> edges, std::vector<double> x) {
    graph::EntityGraph g;
    g.num_nodes = n;
    g.edges = std::move(edges);
    g.node_features.names = {"x"};
    g.node_features.values = Eigen::Map<MatrixXd>(x.data(), n, 1);
    for (int i = 0; i < n; ++i) {
        g.node_features.ids.push_back(i + 1);
        g.centroids.push_back({0.0, double(i)});
    }
    return g;
}

}  // namespace

TEST_SUITE("gnn") {

TEST_CASE("GIN hand message passing on a path") {
    const auto g = scalar_graph(3, {{0, 1}, {1, 2}}, {1, 2, 3});
    const auto out = forward(identity_gin(1), g).output();
    CHECK(out(0, 0) == 3);
    CHECK(out(1, 0) == 6);
    CHECK(out(2, 0) == 5);
    const auto iso = scalar_graph(3, {}, {1, 2, 3});
    CHECK(forward(identity_gin(1), iso).output() == iso.node_features.values);
}

TEST_CASE("forward equals the dense oracle") {
    for (auto type : {LayerType::Gin, LayerType::Pna}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto g = support::random_graph(9, 0.3, 3, seed);
            auto cfg = support::small_config(type, 3);
            cfg.readout = seed % 2 ? Readout::Sum : Readout::Mean;
            const auto m = support::random_model(cfg, seed);
            const auto cache = forward(m, g);
            const auto levels = support::oracle_node_levels(m, g);
            for (int l = 0; l <= cfg.num_layers; ++l) {
                CHECK((cache.nodes(l) - levels[std::size_t(l)]).cwiseAbs().maxCoeff() < 1e-10);
            }
            CHECK((cache.logits - support::oracle_logits(m, g)).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("PNA isolated node uses zero aggregates") {
    auto cfg = support::small_config(LayerType::Pna, 2);
    cfg.num_layers = 1;
    cfg.head_depth = 0;
    const auto m = support::random_model(cfg, 3);
    const auto g = support::random_graph(1, 0.0, 2, 1);
    MatrixXd z = MatrixXd::Zero(1, 26);
    z.leftCols(2) = g.node_features.values;
    const MatrixXd expect = ((z * m.params.layers[0][0].weight).rowwise() + RowVectorXd(m.params.layers[0][0].bias)).cwiseMax(0.0);
    CHECK((forward(m, g).output() - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("PNA star with identical leaves") {
    auto cfg = support::small_config(LayerType::Pna, 1);
    cfg.num_layers = 1;
    const auto m = support::random_model(cfg, 4);
    const auto g = scalar_graph(4, {{0, 1}, {0, 2}, {0, 3}}, {5.0, 2.0, 2.0, 2.0});
    const auto cache = forward(m, g);
    const auto& agg = cache.layers[0].aggregated;
    CHECK(agg(0, 1) == 2.0);  // mean
    CHECK(agg(0, 2) == 2.0);  // min
    CHECK(agg(0, 3) == 2.0);  // max
    CHECK(agg(0, 4) == 0.0);  // std
}

TEST_CASE("zero features and biases give zero logits") {
    auto cfg = support::small_config(LayerType::Gin, 3);
    auto m = init_model(cfg, 5);
    auto g = support::random_graph(6, 0.4, 3, 5);
    g.node_features.values.setZero();
    CHECK(logits(m, g).isZero());
}

TEST_CASE("permutation invariance") {
    for (auto type : {LayerType::Gin, LayerType::Pna}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto g = support::random_graph(10, 0.3, 3, seed);
            const auto m = support::random_model(support::small_config(type, 3), seed);
            const auto pg = support::permute_graph(g, support::random_permutation(10, seed));
            CHECK((logits(m, g) - logits(m, pg)).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("gradients match finite differences") {
    for (auto type : {LayerType::Gin, LayerType::Pna}) {
        for (std::uint64_t seed = 0; seed < 2; ++seed) {
            const auto f = support::grad_fixture(type, seed + 40);
            const auto r = support::gradient_check(f.model, f.graph, int(seed % 3));
            CHECK(r.params < 1e-4);
            CHECK(r.nodes < 1e-4);
        }
    }
}

TEST_CASE("softmax saturation shrinks the gradient") {
    double prev = 1e300;
    for (double t : {1.0, 3.0, 6.0, 12.0}) {
        RowVectorXd z(3);
        z << t, 0, 0;
        const double n = cross_entropy_grad(z, 0).norm();
        CHECK(n < prev);
        prev = n;
    }
}

TEST_CASE("softmax, cross entropy and prediction") {
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        RowVectorXd z(4);
        for (int k = 0; k < 4; ++k) z(k) = rng.uniform(-30, 30);
        const RowVectorXd p = softmax(z);
        CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
        const double zmax = z.maxCoeff();
        const double denom = (z.array() - zmax).exp().sum();
        for (int k = 0; k < 4; ++k) CHECK(p(k) == doctest::Approx(std::exp(z(k) - zmax) / denom).epsilon(1e-12));
        CHECK(cross_entropy(z, i % 4) >= 0.0);
    }
    CHECK(predict_from_logits(RowVectorXd::Zero(3)).label == 0);
    RowVectorXd d(3);
    d << 0, 50, 0;
    const auto p = predict_from_logits(d);
    CHECK(p.label == 1);
    CHECK(p.probabilities(1) > 1 - 1e-12);
}

TEST_CASE("dimension and configuration errors") {
    auto cfg = support::small_config(LayerType::Gin, 3);
    const auto m = init_model(cfg, 1);
    CHECK_THROWS_AS(forward(m, support::random_graph(4, 0.5, 2, 1)), InvalidArgument);
    cfg.num_classes = 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    auto pna = support::small_config(LayerType::Pna, 3);
    pna.pna_delta = 0.0;
    CHECK_THROWS_AS(forward(init_model(pna, 1), support::random_graph(4, 0.5, 3, 1)), InvalidArgument);
}

TEST_CASE("checkpoint round trip is exact") {
    auto cfg = support::small_config(LayerType::Pna, 3);
    const auto m = support::random_model(cfg, 8);
    const auto back = model_from_json(model_to_json(m));
    CHECK(back.seed == m.seed);
    CHECK(back.config.layer == LayerType::Pna);
    CHECK(back.config.pna_delta == m.config.pna_delta);
    const auto a = m.params.tensors(), b = back.params.tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
    CHECK_THROWS_AS(model_from_json(R"({"kind":"gnn","config":{"layer":"xyz"},"parameters":[]})"), Error);
}

TEST_CASE("degree normalizer") {
    const auto ring = support::ring_graph(5);
    CHECK(degree_normalizer({&ring}) == doctest::Approx(std::log(3.0)));
    const auto iso = support::random_graph(3, 0.0, 1, 1);
    CHECK(degree_normalizer({&iso}) == 1.0);
}

TEST_CASE("HACT pooling rules") {
    MatrixXd emb(3, 2);
    emb << 1, 2, 3, 4, 5, 9;
    const MatrixXd all = pool_cells(emb, {0, 0, 0}, 1);
    CHECK(all(0, 0) == doctest::Approx(3.0));
    CHECK(all(0, 1) == doctest::Approx(5.0));
    std::vector<int> counts;
    const MatrixXd some = pool_cells(emb, {0, -1, 0}, 2, &counts);
    CHECK(some.row(1).isZero());
    CHECK(counts == std::vector<int>{2, 0});
    CHECK_THROWS_AS(pool_cells(emb, {0, 3, 0}, 2), InvalidArgument);
}

TEST_CASE("HACT forward equals a flattened oracle and gradients check out") {
    auto cell_cfg = support::small_config(LayerType::Gin, 2);
    cell_cfg.head_depth = 0;
    auto tissue_cfg = support::small_config(LayerType::Gin, 3 + cell_cfg.hidden);
    const auto cells = support::random_graph(12, 0.3, 2, 1);
    const auto tissue = support::random_graph(4, 0.6, 3, 2);
    const std::vector<int> assign{0, 1, 2, 0, 1, -1, 3, 0, 2, 1, 1, 3};
    // random biases and a draw away from ReLU kinks, as for the plain checks
    HactModel model;
    for (std::uint64_t s = 7;; ++s) {
        model = init_hact(cell_cfg, tissue_cfg, s);
        model.cell = support::random_model(model.cell.config, s);
        model.tissue = support::random_model(model.tissue.config, s + 1);
        auto joined = tissue;
        joined.node_features.values.resize(4, 3 + cell_cfg.hidden);
        joined.node_features.values << tissue.node_features.values,
            pool_cells(forward(model.cell, cells).output(), assign, 4, nullptr);
        if (support::kink_margin(model.cell, cells) > 1e-3 && support::kink_margin(model.tissue, joined) > 1e-3) break;
    }
    const auto cache = hact_forward(model, cells, tissue, assign);

    // oracle: cell embeddings, mean per tissue node, concatenation, tissue model
    const MatrixXd emb = support::oracle_node_levels(model.cell, cells).back();
    MatrixXd pooled = MatrixXd::Zero(4, emb.cols());
    std::vector<double> n(4, 0);
    for (std::size_t i = 0; i < assign.size(); ++i) {
        if (assign[i] < 0) continue;
        pooled.row(assign[i]) += emb.row(Eigen::Index(i));
        n[std::size_t(assign[i])] += 1;
    }
    for (int t = 0; t < 4; ++t) if (n[std::size_t(t)] > 0) pooled.row(t) /= n[std::size_t(t)];
    auto joined = tissue;
    joined.node_features.values.resize(4, 3 + emb.cols());
    joined.node_features.values << tissue.node_features.values, pooled;
    CHECK((cache.tissue.logits - support::oracle_logits(model.tissue, joined)).cwiseAbs().maxCoeff() < 1e-9);

    // finite differences through the cell encoder
    const int label = 1;
    const auto grads = hact_backward(model, cache, cross_entropy_grad(cache.tissue.logits, label));
    HactModel probe = model;
    auto tensors = probe.cell.params.tensors();
    const auto analytic = grads.cell.params.tensors();
    double worst = 0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& w = *tensors[t].second;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double keep = w.data()[i];
            w.data()[i] = keep + 1e-5;
            const double up = cross_entropy(hact_forward(probe, cells, tissue, assign).tissue.logits, label);
            w.data()[i] = keep - 1e-5;
            const double down = cross_entropy(hact_forward(probe, cells, tissue, assign).tissue.logits, label);
            w.data()[i] = keep;
            worst = std::max(worst, support::rel_error(analytic[t].second->data()[i], (up - down) / 2e-5));
        }
    }
    CHECK(worst < 1e-4);
    CHECK(hact_from_json(hact_to_json(model)).tissue.params.head[0].weight == model.tissue.params.head[0].weight);
}

}  // TEST_SUITE

TEST_SUITE("train") {

TEST_CASE("lr = 0 leaves parameters unchanged") {
    const auto data = support::ring_clique_dataset();
    std::vector<Sample> samples;
    for (const auto& [g, y] : data) samples.push_back({&g, y});
    auto cfg = support::small_config(LayerType::Gin, 1);
    cfg.num_classes = 2;
    auto m = init_model(cfg, 3);
    const auto before = m;
    TrainConfig tc;
    tc.lr = 0.0;
    tc.epochs = 3;
    train(m, samples, tc);
    const auto a = m.params.tensors();
    const auto b = before.params.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
}

TEST_CASE("same seed gives identical traces and parameters") {
    const auto data = support::ring_clique_dataset();
    std::vector<Sample> samples;
    for (const auto& [g, y] : data) samples.push_back({&g, y});
    auto cfg = support::small_config(LayerType::Pna, 1);
    cfg.num_classes = 2;
    cfg.pna_delta = 0.0;
    TrainConfig tc;
    tc.epochs = 5;
    tc.seed = 11;
    auto m1 = init_model(cfg, 11), m2 = init_model(cfg, 11);
    const auto r1 = train(m1, samples, tc), r2 = train(m2, samples, tc);
    CHECK(r1.loss == r2.loss);
    CHECK(m1.config.pna_delta > 0.0);
    CHECK(model_to_json(m1) == model_to_json(m2));
}

TEST_CASE("ring vs clique becomes separable") {
    const auto data = support::ring_clique_dataset();
    std::vector<Sample> samples;
    for (const auto& [g, y] : data) samples.push_back({&g, y});
    GnnConfig cfg;
    cfg.input_dim = 1;
    cfg.num_layers = 3;
    cfg.hidden = 32;
    auto m = init_model(cfg, 0);
    TrainConfig tc;
    tc.epochs = 200;
    const auto r = train(m, samples, tc);
    CHECK(r.loss.size() == 200);
    CHECK(accuracy(m, samples) == 1.0);
    CHECK(r.loss.back() < r.loss.front());
}

TEST_CASE("non-finite loss aborts") {
    auto g = support::random_graph(4, 0.5, 1, 1);
    g.node_features.values(0, 0) = std::numeric_limits<double>::quiet_NaN();
    auto cfg = support::small_config(LayerType::Gin, 1);
    auto m = init_model(cfg, 1);
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(train(m, {{&g, 0}}, tc), NumericalError);
    CHECK_THROWS_AS(train(m, {}, tc), InvalidArgument);
}

TEST_CASE("HACT training reduces the loss") {
    std::vector<graph::EntityGraph> cells, tissues;
    std::vector<std::vector<int>> assigns;
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) {
        const int y = i % 2;
        auto c = y ? support::clique_graph(1) : support::ring_graph(6);
        auto t = support::random_graph(2, 1.0, 1, std::uint64_t(i));
        cells.push_back(c);
        tissues.push_back(t);
        assigns.push_back({0, 0, 0, 1, 1, 1});
        labels.push_back(y);
    }
    std::vector<HactSample> data;
    for (int i = 0; i < 12; ++i) data.push_back({&cells[i], &tissues[i], &assigns[i], labels[i]});
    auto cc = support::small_config(LayerType::Gin, 1);
    cc.head_depth = 0;
    auto tcfg = support::small_config(LayerType::Gin, 1 + cc.hidden);
    tcfg.num_classes = 2;
    auto model = init_hact(cc, tcfg, 2);
    TrainConfig tc;
    tc.epochs = 60;
    const auto r = train_hact(model, data, tc);
    CHECK(r.loss.back() < r.loss.front());
}

}  // TEST_SUITE
