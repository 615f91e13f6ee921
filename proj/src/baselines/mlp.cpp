#include <cmath>
#include <numeric>

#include "mddlm/baselines/baselines.hpp"

namespace mddlm::baselines {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct Activations {
    std::vector<Eigen::MatrixXd> h;  // per layer input (h[0] = x batch)
    std::vector<Eigen::MatrixXd> z;  // pre-activations
};

Eigen::MatrixXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& x, Activations* acts) {
    Eigen::MatrixXd h = x;
    if (acts) acts->h.push_back(h);
    for (size_t l = 0; l < model.w.size(); ++l) {
        Eigen::MatrixXd z = (h * model.w[l]).rowwise() + model.b[l].transpose();
        if (acts) acts->z.push_back(z);
        if (l + 1 < model.w.size()) {
            h = z.cwiseMax(0.0);  // ReLU
            if (acts) acts->h.push_back(h);
        } else {
            h = z;
        }
    }
    return h;  // logits column
}

}  // namespace

MlpModel train_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpConfig& config,
                   uint64_t seed) {
    if (config.hidden.empty())
        throw ConfigError("train_mlp: needs at least one hidden layer (use train_logreg)");
    if (x.rows() != y.size() || x.rows() == 0) throw DataError("train_mlp: bad matrix shapes");
    for (int hdim : config.hidden)
        if (hdim < 1) throw ConfigError("train_mlp: hidden sizes must be positive");

    MlpModel model;
    model.config = config;
    std::vector<int> sizes{static_cast<int>(x.cols())};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(1);
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        Rng rng(derive_seed(seed, "mlp/init/" + std::to_string(l)));
        double std_dev = std::sqrt(2.0 / static_cast<double>(sizes[l]));
        Eigen::MatrixXd w(sizes[l], sizes[l + 1]);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.normal(0.0, std_dev);
        model.w.push_back(std::move(w));
        model.b.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
    }

    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    for (size_t l = 0; l < model.w.size(); ++l) {
        m_w.push_back(Eigen::MatrixXd::Zero(model.w[l].rows(), model.w[l].cols()));
        v_w.push_back(Eigen::MatrixXd::Zero(model.w[l].rows(), model.w[l].cols()));
        m_b.push_back(Eigen::VectorXd::Zero(model.b[l].size()));
        v_b.push_back(Eigen::VectorXd::Zero(model.b[l].size()));
    }

    const Eigen::Index n = x.rows();
    int step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(seed, "mlp/epoch-" + std::to_string(epoch)));
        shuffle_rng.shuffle(order);

        for (Eigen::Index begin = 0; begin < n; begin += config.batch_size) {
            Eigen::Index end = std::min<Eigen::Index>(begin + config.batch_size, n);
            Eigen::Index bs = end - begin;
            Eigen::MatrixXd xb(bs, x.cols());
            Eigen::VectorXd yb(bs);
            for (Eigen::Index i = 0; i < bs; ++i) {
                xb.row(i) = x.row(order[static_cast<size_t>(begin + i)]);
                yb(i) = y(order[static_cast<size_t>(begin + i)]);
            }

            Activations acts;
            Eigen::MatrixXd logits = mlp_forward(model, xb, &acts);
            Eigen::VectorXd p = logits.col(0).unaryExpr([](double v) { return sigmoid(v); });
            double loss = 0.0;
            for (Eigen::Index i = 0; i < bs; ++i) {
                double zi = logits(i, 0);
                loss += std::log1p(std::exp(-std::abs(zi))) +
                        (zi > 0 ? (1.0 - yb(i)) * zi : -yb(i) * zi);
            }
            loss /= static_cast<double>(bs);
            if (!std::isfinite(loss))
                throw DataError("train_mlp: non-finite loss at step " + std::to_string(step));

            // Backward.
            std::vector<Eigen::MatrixXd> grad_w(model.w.size());
            std::vector<Eigen::VectorXd> grad_b(model.w.size());
            Eigen::MatrixXd delta = (p - yb) / static_cast<double>(bs);  // bs x 1
            for (int l = static_cast<int>(model.w.size()) - 1; l >= 0; --l) {
                const Eigen::MatrixXd& h_in = acts.h[static_cast<size_t>(l)];
                grad_w[static_cast<size_t>(l)] = h_in.transpose() * delta;
                grad_b[static_cast<size_t>(l)] = delta.colwise().sum().transpose();
                if (l > 0) {
                    Eigen::MatrixXd dh = delta * model.w[static_cast<size_t>(l)].transpose();
                    const Eigen::MatrixXd& z = acts.z[static_cast<size_t>(l - 1)];
                    delta = dh.cwiseProduct(
                        z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
                }
            }

            ++step;
            double corr1 = 1.0 - std::pow(config.beta1, step);
            double corr2 = 1.0 - std::pow(config.beta2, step);
            for (size_t l = 0; l < model.w.size(); ++l) {
                m_w[l] = config.beta1 * m_w[l] + (1.0 - config.beta1) * grad_w[l];
                v_w[l] = config.beta2 * v_w[l] + (1.0 - config.beta2) * grad_w[l].cwiseAbs2();
                model.w[l].array() -=
                    config.lr * ((m_w[l].array() / corr1) /
                                     ((v_w[l].array() / corr2).sqrt() + config.eps) +
                                 config.weight_decay * model.w[l].array());
                m_b[l] = config.beta1 * m_b[l] + (1.0 - config.beta1) * grad_b[l];
                v_b[l] = config.beta2 * v_b[l] + (1.0 - config.beta2) * grad_b[l].cwiseAbs2();
                model.b[l].array() -= config.lr * ((m_b[l].array() / corr1) /
                                                   ((v_b[l].array() / corr2).sqrt() + config.eps));
            }
        }
    }
    return model;
}

double predict_mlp(const MlpModel& model, const Eigen::VectorXd& x) {
    Eigen::MatrixXd row = x.transpose();
    return sigmoid(mlp_forward(model, row, nullptr)(0, 0));
}

Eigen::VectorXd predict_mlp_all(const MlpModel& model, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd logits = mlp_forward(model, x, nullptr);
    return logits.col(0).unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace mddlm::baselines
