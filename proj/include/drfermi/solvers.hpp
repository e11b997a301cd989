#pragma once

#include "drfermi/classifier.hpp"
#include "drfermi/dataset.hpp"
#include "drfermi/fairness.hpp"
#include "drfermi/robust.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace drfermi {

enum class SolverKind { det_l1, det_l2, det_linf, sgda_l2, cvar, group_dro };

std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& name);

struct TrainConfig {
    SolverKind solver = SolverKind::det_l2;
    double lambda = 1.0;
    /// Ball radius; the norm is implied by det_* / sgda_l2 and read from here
    /// for cvar and group_dro.
    RobustSpec robust{BallNorm::L2, 0.1};
    double step_size = 1e-5;
    long iterations = 3000;
    long batch_size = 64;      // sgda_l2
    double cvar_level = 1.0;   // cvar, in (0, 1]
    double group_step = 0.01;  // group_dro
    std::uint64_t seed = 0;

    /// Step for the W ascent of sgda_l2; 0 means "same as step_size".
    double ascent_step = 0.0;
    double alpha_min = 1e-3;
    /// Halve the step whenever the objective would increase (det_* only).
    bool safeguard = false;
    /// 0 means max(1, iterations / 200).
    long log_every = 0;

    /// Norm actually used by the fairness term.
    BallNorm effective_norm() const;
    RobustSpec effective_robust() const { return {effective_norm(), robust.epsilon}; }
    long effective_log_every() const;

    /// Throws ConfigError on out-of-range fields.
    void validate(long num_rows) const;
};

struct TraceRecord {
    long iteration = 0;
    double objective = 0.0;
    double loss = 0.0;      // mean cross-entropy
    double fairness = 0.0;  // soft Tr(Q^T Q)
    double robust = 0.0;    // robust_value of the soft Q
    double dpv = 0.0;
    std::optional<double> eov;
    double ermi_hard = 1.0;
    double grad_norm = 0.0;
    double step = 0.0;
    double alpha = 0.0;      // sgda_l2
    double w_norm = 0.0;     // Frobenius norm of W (W* for the closed-form solvers)
    double threshold = 0.0;  // cvar
    std::vector<double> group_weights;  // group_dro
};

struct TrainTrace {
    std::vector<TraceRecord> records;
    long objective_increases = 0;  // accepted steps that raised the objective
    long degenerate_steps = 0;     // steps that used the zero subgradient for sigma_2
    long alpha_clamped = 0;        // sgda_l2 steps where alpha hit alpha_min
    std::vector<std::string> warnings;
};

struct TrainResult {
    ModelParams params;
    TrainTrace trace;
    double alpha = 1.0;     // sgda_l2 final alpha
    Eigen::MatrixXd w;      // final W (k x m)
    double threshold = 0.0; // cvar final t
    Eigen::VectorXd group_weights;
};

/// Full-batch gradient descent on loss + lambda * robust_value with the inner
/// maximization solved exactly every iteration (W* and the singular vectors
/// of the current Q).
TrainResult train_deterministic(const Dataset& data, const ModelParams& model, const TrainConfig& cfg);

/// Mini-batch SGDA on
///   min_{theta, alpha} max_W mean_i[loss_i + lambda (1 + eps alpha) psi_i] + lambda eps / alpha.
TrainResult train_sgda(const Dataset& data, const ModelParams& model, const TrainConfig& cfg);

/// (1 / level) mean[loss - t]_+ + t + lambda * robust_value, joint subgradient
/// descent in (theta, t).
TrainResult train_cvar(const Dataset& data, const ModelParams& model, const TrainConfig& cfg);

/// max over sensitive groups of the group mean loss, via multiplicative
/// weights on the group simplex, plus lambda * robust_value.
TrainResult train_group_dro(const Dataset& data, const ModelParams& model, const TrainConfig& cfg);

/// Dispatch on cfg.solver.
TrainResult train(const Dataset& data, const ModelParams& model, const TrainConfig& cfg);

/// Stochastic-gradient pieces of the sgda_l2 objective on a set of rows.
struct SgdaGradients {
    Eigen::VectorXd theta;  // descent direction for theta
    double alpha = 0.0;     // descent direction for alpha
    Eigen::MatrixXd w;      // ascent direction for W (k x m)
    double mean_psi = 0.0;
    double mean_loss = 0.0;
    Eigen::VectorXd mean_probs;  // batch soft marginal of yhat
};

/// `pi` is the frozen sensitive marginal of the whole training set.
SgdaGradients sgda_gradients(const ModelParams& params, const Dataset& data,
                             std::span<const long> rows, const Eigen::MatrixXd& w, double alpha,
                             const Eigen::VectorXd& pi, double lambda, double epsilon);

/// Frobenius projection radius 2 / (min P_yhat * sqrt(min P_s)), floors 1e-6.
double w_projection_radius(const Eigen::VectorXd& p_yhat, const Eigen::VectorXd& p_s);

/// sqrt(z) = min_{alpha > 0} (z alpha + 1 / alpha) / 2, attained at 1 / sqrt(z).
struct SqrtMin {
    double alpha_star;
    double value;
};
SqrtMin sqrt_min_identity(double z);

/// One multiplicative-weights step q_g <- q_g exp(step * loss_g), renormalized.
Eigen::VectorXd update_group_weights(const Eigen::VectorXd& weights, const Eigen::VectorXd& group_losses,
                                     double step);

/// Mean loss of each sensitive group.
Eigen::VectorXd group_losses(const Eigen::VectorXd& per_sample, const Dataset& data);

}  // namespace drfermi
