#include <doctest.h>

#include <cmath>

#include "mddlm/lm/backprop.hpp"

using namespace mddlm;
using namespace mddlm::lm;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.layers = 2;
    c.heads = 2;
    c.embed_dim = 16;
    c.mlp_dim = 32;
    c.context_len = 32;
    c.vocab_size = 40;
    return c;
}

struct GradCase {
    ModelParams<double> params;
    std::vector<int> ids, targets;
    std::vector<uint8_t> mask;
};

GradCase make_case(uint64_t seed) {
    GradCase g;
    g.params = init_params<double>(tiny_config(), seed);
    Rng rng(derive_seed(seed, "case"));
    size_t len = 12;
    for (size_t i = 0; i < len; ++i) {
        g.ids.push_back(static_cast<int>(rng.uniform_int(40)));
        g.targets.push_back(static_cast<int>(rng.uniform_int(40)));
        g.mask.push_back(i >= 4 ? 1 : 0);  // prompt region masked out
    }
    return g;
}

double loss_of(const GradCase& g, const LoraAdapter<double>* adapter) {
    return lm_loss(forward<double>(g.params, adapter, g.ids), g.targets, g.mask);
}

/// Central finite difference on one coordinate of an arbitrary tensor.
double fd_grad(GradCase& g, const LoraAdapter<double>* adapter, double* coord, double h = 1e-5) {
    double saved = *coord;
    *coord = saved + h;
    double up = loss_of(g, adapter);
    *coord = saved - h;
    double down = loss_of(g, adapter);
    *coord = saved;
    return (up - down) / (2.0 * h);
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("lm_loss hand cases") {
    // probability 1 on each target -> 0 loss
    Mat<double> logits = Mat<double>::Zero(3, 5);
    std::vector<int> targets{1, 2, 4};
    for (int t = 0; t < 3; ++t) logits(t, targets[static_cast<size_t>(t)]) = 200.0;
    CHECK(lm_loss(logits, targets) == doctest::Approx(0.0).epsilon(1e-12));

    // uniform over 50 -> ln 50
    Mat<double> uniform = Mat<double>::Zero(4, 50);
    std::vector<int> t50{0, 7, 31, 49};
    CHECK(lm_loss(uniform, t50) == doctest::Approx(std::log(50.0)));

    // two positions with probabilities 0.5 and 0.25
    Mat<double> two = Mat<double>::Zero(2, 4);
    two.row(0) << std::log(0.5), std::log(0.25), std::log(0.125), std::log(0.125);
    two.row(1) << std::log(0.25), std::log(0.25), std::log(0.25), std::log(0.25);
    std::vector<int> tt{0, 1};
    CHECK(lm_loss(two, tt) == doctest::Approx(-(std::log(0.5) + std::log(0.25)) / 2.0));
    CHECK(lm_loss(two, tt) == doctest::Approx(1.0397).epsilon(1e-4));
}

TEST_CASE("lm_loss error paths") {
    Mat<double> logits = Mat<double>::Zero(2, 5);
    std::vector<int> targets{1, 2};
    CHECK_THROWS_AS(lm_loss(logits, targets, {0, 0}), DataError);   // all masked
    CHECK_THROWS_AS(lm_loss(logits, {1}), DataError);               // shape mismatch
    CHECK_THROWS_AS(lm_loss(logits, {1, 7}), DataError);            // target out of range
}

TEST_CASE("forward shapes, softmax normalization, and length guard") {
    auto g = make_case(1);
    auto logits = forward<double>(g.params, nullptr, g.ids);
    CHECK(logits.rows() == static_cast<Eigen::Index>(g.ids.size()));
    CHECK(logits.cols() == 40);
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        double m = logits.row(t).maxCoeff();
        double z = (logits.row(t).array() - m).exp().sum();
        CHECK(std::abs(((logits.row(t).array() - m).exp() / z).sum() - 1.0) <= 1e-12);
    }
    std::vector<int> too_long(40, 1);
    CHECK_THROWS_AS(forward<double>(g.params, nullptr, too_long), DataError);
    CHECK_THROWS_AS(forward<double>(g.params, nullptr, std::vector<int>{0, 99}), DataError);
}

TEST_CASE("causality: permuting the suffix leaves earlier logits unchanged") {
    auto g = make_case(2);
    auto base = forward<double>(g.params, nullptr, g.ids);
    auto permuted_ids = g.ids;
    std::swap(permuted_ids[8], permuted_ids[11]);
    std::swap(permuted_ids[9], permuted_ids[10]);
    auto permuted = forward<double>(g.params, nullptr, permuted_ids);
    for (int t = 0; t < 8; ++t)
        for (int v = 0; v < 40; ++v)
            CHECK(std::abs(base(t, v) - permuted(t, v)) <= 1e-12);
}

TEST_CASE("softmax cross-entropy logit gradients sum to zero per unmasked row") {
    auto g = make_case(3);
    auto logits = forward<double>(g.params, nullptr, g.ids);
    size_t masked = static_cast<size_t>(std::count(g.mask.begin(), g.mask.end(), 1));
    auto [sum_nll, dlogits] =
        lm_loss_sum_grad(logits, g.targets, g.mask, static_cast<double>(masked));
    (void)sum_nll;
    for (Eigen::Index t = 0; t < dlogits.rows(); ++t) {
        double row_sum = dlogits.row(t).sum();
        if (g.mask[static_cast<size_t>(t)])
            CHECK(std::abs(row_sum) <= 1e-10);
        else
            CHECK(row_sum == 0.0);
    }
}

TEST_CASE("analytic gradients match central finite differences on every base tensor kind") {
    auto g = make_case(4);
    size_t masked = static_cast<size_t>(std::count(g.mask.begin(), g.mask.end(), 1));
    ForwardCache<double> cache;
    auto logits = forward<double>(g.params, nullptr, g.ids, &cache);
    auto [sum_nll, dlogits] =
        lm_loss_sum_grad(logits, g.targets, g.mask, static_cast<double>(masked));
    (void)sum_nll;
    auto grads = backward<double>(g.params, nullptr, cache, dlogits);
    REQUIRE(grads.base.has_value());

    Rng rng(77);
    double worst = 0;
    size_t checked = 0;
    for_each_tensor(*grads.base, [&](const std::string& name, Eigen::Ref<Mat<double>> gm) {
        // Pick rows that actually participate for the embedding tables.
        auto pick_row = [&](Eigen::Index rows) -> Eigen::Index {
            if (name == "tok_emb")
                return g.ids[rng.uniform_int(g.ids.size())];
            if (name == "pos_emb")
                return static_cast<Eigen::Index>(rng.uniform_int(g.ids.size()));
            return static_cast<Eigen::Index>(rng.uniform_int(static_cast<uint64_t>(rows)));
        };
        for (int k = 0; k < 10; ++k) {
            Eigen::Index r = pick_row(gm.rows());
            Eigen::Index c = static_cast<Eigen::Index>(
                rng.uniform_int(static_cast<uint64_t>(gm.cols())));
            double analytic = gm(r, c);
            // Locate the same coordinate in the parameter struct.
            double* coord = nullptr;
            for_each_tensor(g.params,
                            [&](const std::string& pname, Eigen::Ref<Mat<double>> pm) {
                                if (pname == name) coord = &pm(r, c);
                            });
            REQUIRE(coord != nullptr);
            double numeric = fd_grad(g, nullptr, coord);
            worst = std::max(worst, rel_err(analytic, numeric));
            ++checked;
        }
    });
    CHECK(checked >= 200);
    CHECK(worst < 1e-4);
}

TEST_CASE("adapter gradients match finite differences; base stays frozen") {
    auto g = make_case(5);
    LoraConfig lc;
    lc.rank = 3;
    lc.targets = {"wq", "wv", "wo", "wk", "w1", "w2", "wout"};
    auto adapter = lora_inject(g.params, lc, 11);
    // Move B off zero so both a and b have non-trivial gradients.
    Rng perturb(13);
    for (auto& d : adapter.deltas)
        for (Eigen::Index c = 0; c < d.b.cols(); ++c)
            for (Eigen::Index r = 0; r < d.b.rows(); ++r)
                d.b(r, c) = perturb.normal(0.0, 0.02);

    size_t masked = static_cast<size_t>(std::count(g.mask.begin(), g.mask.end(), 1));
    ForwardCache<double> cache;
    auto logits = forward<double>(g.params, &adapter, g.ids, &cache);
    auto [sum_nll, dlogits] =
        lm_loss_sum_grad(logits, g.targets, g.mask, static_cast<double>(masked));
    (void)sum_nll;
    auto grads = backward<double>(g.params, &adapter, cache, dlogits);
    CHECK_FALSE(grads.base.has_value());  // frozen base receives no gradient
    REQUIRE(grads.adapter.has_value());

    Rng rng(99);
    double worst = 0;
    for (size_t di = 0; di < adapter.deltas.size(); ++di) {
        auto& delta = adapter.deltas[di];
        auto& gdelta = grads.adapter->deltas[di];
        for (int k = 0; k < 2; ++k) {
            Eigen::Index r = static_cast<Eigen::Index>(
                rng.uniform_int(static_cast<uint64_t>(delta.a.rows())));
            Eigen::Index c = static_cast<Eigen::Index>(
                rng.uniform_int(static_cast<uint64_t>(delta.a.cols())));
            worst = std::max(worst, rel_err(gdelta.a(r, c), fd_grad(g, &adapter, &delta.a(r, c))));
            Eigen::Index rb = static_cast<Eigen::Index>(
                rng.uniform_int(static_cast<uint64_t>(delta.b.rows())));
            Eigen::Index cb = static_cast<Eigen::Index>(
                rng.uniform_int(static_cast<uint64_t>(delta.b.cols())));
            worst = std::max(worst, rel_err(gdelta.b(rb, cb), fd_grad(g, &adapter, &delta.b(rb, cb))));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("non-finite gradients are reported with the tensor name") {
    auto g = make_case(6);
    ForwardCache<double> cache;
    auto logits = forward<double>(g.params, nullptr, g.ids, &cache);
    Mat<double> dlogits = Mat<double>::Zero(logits.rows(), logits.cols());
    dlogits(5, 3) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(backward<double>(g.params, nullptr, cache, dlogits),
                         doctest::Contains("non-finite gradient"), DataError);
}
