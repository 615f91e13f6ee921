#pragma once

#include <Eigen/Dense>

#include "mddlm/cohort/schema.hpp"

namespace mddlm::baselines {

using cohort::Cohort;
using cohort::Record;

/// Frozen train-set preprocessing: standardized numeric slots, one-hot
/// categorical slots, and a missing indicator per feature. Missing numeric
/// values map to 0 after standardization with indicator 1; missing
/// categoricals to an all-zero one-hot with indicator 1.
class Featurizer {
public:
    Featurizer() = default;

    /// Statistics come from the given train ids only.
    static Featurizer fit(const Cohort& cohort, const std::vector<std::string>& train_ids);

    Eigen::VectorXd apply(const Record& record) const;
    /// Rows in id order; second return is the label vector (0/1).
    std::pair<Eigen::MatrixXd, Eigen::VectorXd> apply_all(
        const Cohort& cohort, const std::vector<std::string>& ids) const;

    size_t dim() const { return columns_.size(); }
    const std::vector<std::string>& column_names() const { return columns_; }
    bool fitted() const { return fitted_; }
    uint64_t digest() const;  // distinguishes featurizers fit on different data

private:
    struct FeatureLayout {
        std::string name;
        bool numeric = true;
        size_t offset = 0;  // first slot
        double mean = 0, sd = 1;
        std::vector<std::string> categories;
    };
    std::vector<FeatureLayout> layout_;
    std::vector<std::string> columns_;
    bool fitted_ = false;
};

/// Feature-matrix export for external tools: header, one row per id, label
/// column last.
std::string export_matrix_csv(const Featurizer& featurizer, const Cohort& cohort,
                              const std::vector<std::string>& ids);

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

struct LinearModel {
    Eigen::VectorXd weights;
    double bias = 0;
    int iterations = 0;
    double final_grad_norm = 0;
};

/// Mean BCE loss with l2/2 ||w||^2 and its gradient (bias unpenalized).
std::tuple<double, Eigen::VectorXd, double> logreg_loss_grad(const Eigen::MatrixXd& x,
                                                             const Eigen::VectorXd& y,
                                                             const Eigen::VectorXd& w, double bias,
                                                             double l2);

/// Deterministic full-batch gradient descent with a Lipschitz step size;
/// stops when the gradient norm drops below tol or at max_iters.
LinearModel train_logreg(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double l2,
                         uint64_t seed, int max_iters = 20000, double tol = 1e-6);

double predict_logreg(const LinearModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict_logreg_all(const LinearModel& model, const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

struct MlpConfig {
    std::vector<int> hidden{64, 64};
    double lr = 1e-3;
    double weight_decay = 0.0;
    int epochs = 60;
    int batch_size = 64;
    double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
};

struct MlpModel {
    std::vector<Eigen::MatrixXd> w;  // per layer, in x out
    std::vector<Eigen::VectorXd> b;
    MlpConfig config;
};

/// ReLU hidden layers, sigmoid output, BCE loss, decoupled-weight-decay
/// optimizer; deterministic under seed.
MlpModel train_mlp(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const MlpConfig& config,
                   uint64_t seed);

double predict_mlp(const MlpModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd predict_mlp_all(const MlpModel& model, const Eigen::MatrixXd& x);

}  // namespace mddlm::baselines
