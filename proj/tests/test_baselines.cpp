#include <doctest.h>

#include <cmath>

#include "mddlm/baselines/baselines.hpp"
#include "mddlm/cohort/synth.hpp"
#include "mddlm/metrics/metrics.hpp"

using namespace mddlm;
using namespace mddlm::baselines;
using cohort::Label;
using cohort::Record;
using cohort::Value;

namespace {

cohort::Cohort small_cohort(size_t n, uint64_t seed) {
    auto gen = cohort::synth_preset("strong-signal");
    gen.n = n;
    return cohort::synth_cohort(gen, seed);
}

std::vector<std::string> all_ids(const cohort::Cohort& c) {
    std::vector<std::string> ids;
    for (const auto& r : c.records) ids.push_back(r.patient_id);
    return ids;
}

}  // namespace

TEST_CASE("featurizer layout: one-hot slots plus a missing indicator per feature") {
    auto c = small_cohort(50, 1);
    auto f = Featurizer::fit(c, all_ids(c));
    // sleeplessness has 3 categories -> 3 one-hot slots + 1 indicator
    size_t slots = 0;
    for (const auto& name : f.column_names()) {
        if (name.rfind("sleeplessness", 0) == 0) ++slots;
    }
    CHECK(slots == 4);

    // missing numeric -> standardized slot 0, indicator 1
    Record r = c.records[0];
    r.set("bmi", Value::missing());
    auto x = f.apply(r);
    size_t bmi_col = 0, bmi_missing = 0;
    for (size_t i = 0; i < f.column_names().size(); ++i) {
        if (f.column_names()[i] == "bmi") bmi_col = i;
        if (f.column_names()[i] == "bmi__missing") bmi_missing = i;
    }
    CHECK(x(static_cast<Eigen::Index>(bmi_col)) == 0.0);
    CHECK(x(static_cast<Eigen::Index>(bmi_missing)) == 1.0);
}

TEST_CASE("apply before fit is an error") {
    Featurizer unfitted;
    CHECK_THROWS_AS(unfitted.apply(Record{}), ConfigError);
}

TEST_CASE("train columns standardize to mean 0 sd 1 on non-missing entries") {
    auto c = small_cohort(400, 2);
    auto ids = all_ids(c);
    auto f = Featurizer::fit(c, ids);
    auto [x, y] = f.apply_all(c, ids);
    (void)y;
    for (size_t col = 0; col < f.column_names().size(); ++col) {
        const std::string& name = f.column_names()[col];
        const auto* spec = c.schema.find(name);
        if (!spec || !spec->is_numeric()) continue;
        // gather non-missing rows for this feature
        std::vector<double> vals;
        for (size_t i = 0; i < ids.size(); ++i)
            if (!c.records[i].get(name).is_missing())
                vals.push_back(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)));
        double mean = 0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double ss = 0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        double sd = std::sqrt(ss / static_cast<double>(vals.size() - 1));
        CHECK(std::abs(mean) <= 1e-9);
        CHECK(std::abs(sd - 1.0) <= 1e-6);
    }
}

TEST_CASE("leakage guard: featurizer fit on train differs from fit on train + test") {
    auto c = small_cohort(300, 3);
    auto ids = all_ids(c);
    std::vector<std::string> train(ids.begin(), ids.begin() + 200);
    auto on_train = Featurizer::fit(c, train);
    auto on_all = Featurizer::fit(c, ids);
    CHECK(on_train.digest() != on_all.digest());
    // identical inputs give identical digests
    CHECK(on_train.digest() == Featurizer::fit(c, train).digest());
}

TEST_CASE("feature matrix export carries headers, rows and the label column") {
    auto c = small_cohort(20, 4);
    auto ids = all_ids(c);
    auto f = Featurizer::fit(c, ids);
    std::string csv = export_matrix_csv(f, c, ids);
    size_t lines = static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == 21);
    CHECK(csv.rfind("patient_id,", 0) == 0);
    CHECK(csv.find(",label\n") != std::string::npos);
    CHECK(csv.find("sex=female") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

TEST_CASE("logistic gradient matches finite differences") {
    Rng rng(9);
    Eigen::MatrixXd x(30, 4);
    Eigen::VectorXd y(30);
    for (Eigen::Index i = 0; i < 30; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = rng.normal(0, 1);
        y(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    Eigen::VectorXd w(4);
    for (Eigen::Index j = 0; j < 4; ++j) w(j) = rng.normal(0, 0.5);
    double bias = 0.3, l2 = 0.05;
    auto [loss, grad_w, grad_b] = logreg_loss_grad(x, y, w, bias, l2);
    (void)loss;
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 4; ++j) {
        Eigen::VectorXd up = w, down = w;
        up(j) += h;
        down(j) -= h;
        double fd = (std::get<0>(logreg_loss_grad(x, y, up, bias, l2)) -
                     std::get<0>(logreg_loss_grad(x, y, down, bias, l2))) /
                    (2 * h);
        CHECK(std::abs(grad_w(j) - fd) / std::max({std::abs(fd), std::abs(grad_w(j)), 1e-8}) <
              1e-6);
    }
    double fd_b = (std::get<0>(logreg_loss_grad(x, y, w, bias + h, l2)) -
                   std::get<0>(logreg_loss_grad(x, y, w, bias - h, l2))) /
                  (2 * h);
    CHECK(std::abs(grad_b - fd_b) < 1e-6);
}

TEST_CASE("logreg separates a linearly separable set perfectly") {
    Eigen::MatrixXd x(40, 2);
    Eigen::VectorXd y(40);
    Rng rng(6);
    for (Eigen::Index i = 0; i < 40; ++i) {
        double cls = i % 2 ? 1.0 : -1.0;
        x(i, 0) = cls * (1.0 + rng.uniform());
        x(i, 1) = rng.normal(0, 0.1);
        y(i) = cls > 0 ? 1.0 : 0.0;
    }
    auto model = train_logreg(x, y, 1e-6, 1);
    auto p = predict_logreg_all(model, x);
    metrics::ScoredSet set;
    for (Eigen::Index i = 0; i < 40; ++i) set.push(p(i), static_cast<int>(y(i)));
    CHECK(metrics::roc_auc(set).second == doctest::Approx(1.0));
}

TEST_CASE("logreg on constant labels predicts the base rate") {
    Eigen::MatrixXd x(25, 3);
    Rng rng(8);
    for (Eigen::Index i = 0; i < 25; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal(0, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Ones(25);
    auto model = train_logreg(x, y, 0.01, 1);
    auto p = predict_logreg_all(model, x);
    for (Eigen::Index i = 0; i < 25; ++i) CHECK(p(i) > 0.9);
}

TEST_CASE("logreg rejects negative l2 and bad labels") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(5, 2);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(5);
    CHECK_THROWS_AS(train_logreg(x, y, -1.0, 1), ConfigError);
    y(2) = 0.5;
    CHECK_THROWS_AS(train_logreg(x, y, 0.1, 1), DataError);
}

TEST_CASE("logreg training is deterministic") {
    auto c = small_cohort(150, 5);
    auto ids = all_ids(c);
    auto f = Featurizer::fit(c, ids);
    auto [x, y] = f.apply_all(c, ids);
    auto a = train_logreg(x, y, 1e-4, 3);
    auto b = train_logreg(x, y, 1e-4, 3);
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.bias == b.bias);
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

TEST_CASE("mlp fits XOR to training accuracy 1.0") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 0, 1, 1, 0, 1, 1;
    Eigen::VectorXd y(4);
    y << 0, 1, 1, 0;
    MlpConfig config;
    config.hidden = {16};
    config.lr = 0.02;
    config.epochs = 800;
    config.batch_size = 4;
    auto model = train_mlp(x, y, config, 2);
    auto p = predict_mlp_all(model, x);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK((p(i) >= 0.5) == (y(i) >= 0.5));
}

TEST_CASE("mlp requires a hidden layer") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
    MlpConfig config;
    config.hidden = {};
    CHECK_THROWS_AS(train_mlp(x, y, config, 1), ConfigError);
}

TEST_CASE("mlp is deterministic under seed and emits probabilities in [0,1]") {
    auto c = small_cohort(120, 7);
    auto ids = all_ids(c);
    auto f = Featurizer::fit(c, ids);
    auto [x, y] = f.apply_all(c, ids);
    MlpConfig config;
    config.epochs = 10;
    auto a = train_mlp(x, y, config, 5);
    auto b = train_mlp(x, y, config, 5);
    for (size_t l = 0; l < a.w.size(); ++l)
        CHECK((a.w[l] - b.w[l]).cwiseAbs().maxCoeff() == 0.0);
    auto c2 = train_mlp(x, y, config, 6);
    bool any_diff = false;
    for (size_t l = 0; l < a.w.size(); ++l)
        any_diff |= (a.w[l] - c2.w[l]).cwiseAbs().maxCoeff() > 0.0;
    CHECK(any_diff);

    auto p = predict_mlp_all(a, x);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        CHECK(p(i) >= 0.0);
        CHECK(p(i) <= 1.0);
    }
}
