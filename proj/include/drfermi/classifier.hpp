#pragma once

#include "drfermi/dataset.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace drfermi {

enum class ModelKind { logistic, mlp1 };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Shape of one parameter block inside the flat vector (column-major).
struct ParamBlock {
    std::string name;
    long rows = 0;
    long cols = 0;

    long size() const noexcept { return rows * cols; }
};

/// Parameters of a softmax classifier, stored as one flat vector so that
/// gradients and finite-difference checks address every entry uniformly.
///
/// logistic: blocks W (d x m), b (1 x m); logits = X W + b.
/// mlp1:     blocks W1 (d x h), b1 (1 x h), W2 (h x m), b2 (1 x m);
///           logits = tanh(X W1 + b1) W2 + b2.
class ModelParams {
public:
    ModelParams(ModelKind kind, std::vector<ParamBlock> layout, Eigen::VectorXd flat);

    /// Zero-initialized multinomial logistic regression.
    static ModelParams logistic(long input_dim, int num_classes);

    /// One tanh hidden layer, weights uniform in +-1/sqrt(fan_in), zero biases.
    static ModelParams mlp1(long input_dim, int num_classes, long hidden, std::uint64_t seed);

    ModelKind kind() const noexcept { return kind_; }
    const std::vector<ParamBlock>& layout() const noexcept { return layout_; }
    const Eigen::VectorXd& flat() const noexcept { return flat_; }
    long size() const noexcept { return flat_.size(); }

    long input_dim() const noexcept { return layout_.front().rows; }
    int num_classes() const noexcept { return static_cast<int>(layout_.back().cols); }

    Eigen::Map<const Eigen::MatrixXd> block(std::size_t i) const;

    /// Returns a copy with a replaced flat vector (same layout).
    ModelParams with_flat(Eigen::VectorXd flat) const;

    /// theta <- theta + step * direction
    void axpy(double step, const Eigen::VectorXd& direction);

private:
    ModelKind kind_ = ModelKind::logistic;
    std::vector<ParamBlock> layout_;
    Eigen::VectorXd flat_;
};

/// Row-stochastic class probabilities plus argmax predictions (ties go to
/// the smallest class index).
struct PredictionBatch {
    Eigen::MatrixXd probs;
    Eigen::VectorXi hard;
};

PredictionBatch forward(const ModelParams& params, const Eigen::MatrixXd& x);
PredictionBatch forward(const ModelParams& params, const Dataset& data);

struct LossGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

/// Mean cross-entropy over `rows` and its exact gradient.
LossGrad loss_and_grad(const ModelParams& params, const Dataset& data, std::span<const long> rows);
LossGrad loss_and_grad(const ModelParams& params, const Dataset& data);

/// sum_i weights[i] * loss_i over all rows, and its gradient.
LossGrad weighted_loss_and_grad(const ModelParams& params, const Dataset& data,
                                const Eigen::VectorXd& weights);

/// Per-sample cross-entropy losses for every row.
Eigen::VectorXd per_sample_loss(const ModelParams& params, const Dataset& data);

/// Exact d F_j(x_i) / d theta. Row (r * m + j) holds the gradient for the
/// r-th entry of `rows` and class j.
Eigen::MatrixXd prob_jacobian(const ModelParams& params, const Dataset& data,
                              std::span<const long> rows);

/// Vector-Jacobian product sum_{i,j} coeff(i, j) * d F_j(x_i) / d theta, with
/// x given row-wise. This is the building block of every fairness gradient.
Eigen::VectorXd prob_vjp(const ModelParams& params, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& coeff);

/// Copies the selected rows of `x`.
Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const long> rows);

double accuracy(const PredictionBatch& pred, const Eigen::VectorXi& labels);

}  // namespace drfermi
