#include <cmath>

#include "mddlm/baselines/baselines.hpp"

namespace mddlm::baselines {

namespace {
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

std::tuple<double, Eigen::VectorXd, double> logreg_loss_grad(const Eigen::MatrixXd& x,
                                                             const Eigen::VectorXd& y,
                                                             const Eigen::VectorXd& w, double bias,
                                                             double l2) {
    const double n = static_cast<double>(x.rows());
    Eigen::VectorXd z = x * w;
    z.array() += bias;
    Eigen::VectorXd p = z.unaryExpr([](double v) { return sigmoid(v); });
    // Numerically safe BCE via log(1 + exp(-|z|)).
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        double zi = z(i);
        loss += std::log1p(std::exp(-std::abs(zi))) + (zi > 0 ? (1.0 - y(i)) * zi : -y(i) * zi);
    }
    loss = loss / n + 0.5 * l2 * w.squaredNorm();
    Eigen::VectorXd residual = p - y;
    Eigen::VectorXd grad_w = x.transpose() * residual / n + l2 * w;
    double grad_b = residual.sum() / n;
    return {loss, std::move(grad_w), grad_b};
}

LinearModel train_logreg(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double l2,
                         uint64_t seed, int max_iters, double tol) {
    if (l2 < 0.0) throw ConfigError("train_logreg: l2 must be non-negative");
    if (x.rows() != y.size()) throw DataError("train_logreg: x/y size mismatch");
    if (x.rows() == 0) throw DataError("train_logreg: empty matrix");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y(i) != 0.0 && y(i) != 1.0) throw DataError("train_logreg: labels must be 0/1");

    // Step size 1/L with L = sigma_max(X)^2 / (4n) + l2; the leading singular
    // value comes from a few deterministic power iterations.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(x.cols()).normalized();
    Rng rng(derive_seed(seed, "logreg/power"));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 0.01 * rng.uniform();
    v.normalize();
    double sigma_sq = 1.0;
    for (int it = 0; it < 60; ++it) {
        Eigen::VectorXd u = x.transpose() * (x * v);
        sigma_sq = u.norm();
        if (sigma_sq <= 0.0) break;
        v = u / sigma_sq;
    }
    double lip = sigma_sq / (4.0 * static_cast<double>(x.rows())) + l2 + 1e-12;
    double step = 1.0 / lip;

    LinearModel model;
    model.weights = Eigen::VectorXd::Zero(x.cols());
    model.bias = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        auto [loss, grad_w, grad_b] = logreg_loss_grad(x, y, model.weights, model.bias, l2);
        (void)loss;
        double gnorm = std::sqrt(grad_w.squaredNorm() + grad_b * grad_b);
        model.iterations = it + 1;
        model.final_grad_norm = gnorm;
        if (gnorm < tol) break;
        model.weights -= step * grad_w;
        model.bias -= step * grad_b;
    }
    return model;
}

double predict_logreg(const LinearModel& model, const Eigen::VectorXd& x) {
    return sigmoid(model.weights.dot(x) + model.bias);
}

Eigen::VectorXd predict_logreg_all(const LinearModel& model, const Eigen::MatrixXd& x) {
    Eigen::VectorXd z = x * model.weights;
    z.array() += model.bias;
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace mddlm::baselines
