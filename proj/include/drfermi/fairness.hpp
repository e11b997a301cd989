#pragma once

// Dependence between predictions and the sensitive attribute: the empirical
// probability matrices, the normalized matrix Q with entries
//     Q[j][l] = P(yhat = j, s = l) / sqrt(P(yhat = j) P(s = l)),
// its singular values, ERMI = Tr(Q^T Q) and HGR = sigma_2(Q), plus the
// gradients of these quantities w.r.t. the classifier parameters.

#include "drfermi/classifier.hpp"
#include "drfermi/dataset.hpp"
#include "drfermi/errors.hpp"

#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <optional>

namespace drfermi {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Diagonals of P_yhat (length m) and P_s (length k) plus the joint P_yhat,s (m x k).
template <typename Scalar = double>
struct ProbTriple {
    Vec<Scalar> p_yhat;
    Mat<Scalar> p_joint;
    Vec<Scalar> p_s;

    /// Marginals taken as row / column sums of `joint`.
    static ProbTriple from_joint(const Mat<Scalar>& joint) {
        return {joint.rowwise().sum(), joint, joint.colwise().sum().transpose()};
    }

    int num_classes() const { return static_cast<int>(p_joint.rows()); }
    int num_sensitive() const { return static_cast<int>(p_joint.cols()); }
};

/// Q together with its SVD. Singular values descend; each right singular
/// vector is signed so its largest-magnitude entry is positive and the left
/// vector follows.
template <typename Scalar = double>
struct QMatrix {
    Mat<Scalar> q;
    Vec<Scalar> sigma;
    Mat<Scalar> u;  // m x r
    Mat<Scalar> v;  // k x r

    /// sigma_2 is zero or tied with sigma_3 (within 1e-9); its singular
    /// vector is then not unique and gradients through it are one-sided.
    bool sigma2_degenerate() const {
        if (sigma.size() < 2 || sigma(1) < Scalar(1e-9)) return true;
        return sigma.size() > 2 && sigma(1) - sigma(2) < Scalar(1e-9);
    }
};

/// SVD of an arbitrary small dense matrix with the sign convention above.
template <typename Scalar>
QMatrix<Scalar> decompose(Mat<Scalar> q) {
    Eigen::JacobiSVD<Mat<Scalar>> svd(q, Eigen::ComputeThinU | Eigen::ComputeThinV);
    QMatrix<Scalar> out{std::move(q), svd.singularValues(), svd.matrixU(), svd.matrixV()};
    for (long i = 0; i < out.v.cols(); ++i) {
        Eigen::Index arg = 0;
        for (Eigen::Index r = 1; r < out.v.rows(); ++r)
            if (std::abs(out.v(r, i)) > std::abs(out.v(arg, i)) + Scalar(1e-12)) arg = r;
        if (out.v(arg, i) < Scalar(0)) {
            out.v.col(i) *= Scalar(-1);
            out.u.col(i) *= Scalar(-1);
        }
    }
    return out;
}

template <typename Scalar>
QMatrix<Scalar> build_q(const ProbTriple<Scalar>& pt) {
    const auto m = pt.p_joint.rows();
    const auto k = pt.p_joint.cols();
    if (pt.p_yhat.size() != m || pt.p_s.size() != k)
        throw DimensionError("probability triple has inconsistent shapes");
    for (Eigen::Index j = 0; j < m; ++j)
        if (!(pt.p_yhat(j) > Scalar(0)))
            throw DegenerateDistributionError("P(yhat = " + std::to_string(j) + ") is zero");
    for (Eigen::Index l = 0; l < k; ++l)
        if (!(pt.p_s(l) > Scalar(0)))
            throw DegenerateDistributionError("P(s = " + std::to_string(l) + ") is zero");
    const Vec<Scalar> ry = pt.p_yhat.array().rsqrt();
    const Vec<Scalar> rs = pt.p_s.array().rsqrt();
    Mat<Scalar> q = ry.asDiagonal() * pt.p_joint * rs.asDiagonal();
    return decompose<Scalar>(std::move(q));
}

/// Tr(Q^T Q) = sum_i sigma_i^2 (>= 1 for a valid triple).
template <typename Scalar>
Scalar ermi(const QMatrix<Scalar>& qm) {
    return qm.q.squaredNorm();
}

/// sigma_2(Q); zero when Q has a single singular value.
template <typename Scalar>
Scalar hgr(const QMatrix<Scalar>& qm) {
    return qm.sigma.size() > 1 ? qm.sigma(1) : Scalar(0);
}

template <typename Scalar>
Scalar nuclear_norm(const QMatrix<Scalar>& qm) {
    return qm.sigma.sum();
}

/// -Tr(W P_yhat W^T) + 2 Tr(W P_yhat,s P_s^{-1/2}) - 1 for W of shape k x m.
template <typename Scalar>
Scalar variational_objective(const ProbTriple<Scalar>& pt, const Mat<Scalar>& w) {
    if (w.rows() != pt.p_joint.cols() || w.cols() != pt.p_joint.rows())
        throw DimensionError("W must be k x m");
    const Scalar quad = (w.array().square().rowwise() * pt.p_yhat.transpose().array()).sum();
    const Mat<Scalar> cross = w * pt.p_joint * pt.p_s.array().rsqrt().matrix().asDiagonal();
    return -quad + Scalar(2) * cross.trace() - Scalar(1);
}

template <typename Scalar>
struct VariationalErmi {
    Scalar value;
    Mat<Scalar> w_star;  // k x m
};

/// Maximizer W* = P_s^{-1/2} P_yhat,s^T P_yhat^{-1} and the objective there,
/// which equals Tr(Q^T Q) - 1.
template <typename Scalar>
VariationalErmi<Scalar> variational_ermi(const ProbTriple<Scalar>& pt) {
    for (Eigen::Index j = 0; j < pt.p_yhat.size(); ++j)
        if (!(pt.p_yhat(j) > Scalar(0)))
            throw DegenerateDistributionError("P_yhat is singular");
    for (Eigen::Index l = 0; l < pt.p_s.size(); ++l)
        if (!(pt.p_s(l) > Scalar(0)))
            throw DegenerateDistributionError("P_s is singular");
    Mat<Scalar> w = pt.p_s.array().rsqrt().matrix().asDiagonal() * pt.p_joint.transpose() *
                    pt.p_yhat.cwiseInverse().asDiagonal();
    const Scalar value = variational_objective(pt, w);
    return {value, std::move(w)};
}

/// Per-sample term whose sample mean is the variational objective plus one:
///   psi = -sum_{a,j} W[a][j]^2 F_j + 2 p_s[s_i]^{-1/2} sum_j W[s_i][j] F_j.
template <typename Scalar, typename RowDerived>
Scalar psi_kernel(const Eigen::MatrixBase<RowDerived>& probs_row, int s_i, const Vec<Scalar>& p_s,
                  const Mat<Scalar>& w) {
    const auto f = probs_row.derived().template cast<Scalar>();
    Scalar quad(0), lin(0);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        quad += w.col(j).squaredNorm() * f(j);
        lin += w(s_i, j) * f(j);
    }
    return -quad + Scalar(2) * lin / std::sqrt(p_s(s_i));
}

enum class ProbMode { soft, hard };

/// Empirical triple from per-sample class probabilities. Soft mode averages
/// F_j(x_i); hard mode replaces F by the one-hot argmax. P_s is the empirical
/// sensitive marginal.
ProbTriple<double> estimate_probs(const PredictionBatch& pred, const Eigen::VectorXi& sensitive,
                                  int num_sensitive, ProbMode mode);

/// Everything the fairness gradients need at one parameter value.
struct FairnessState {
    PredictionBatch pred;
    ProbTriple<double> triple;
    QMatrix<double> q;
};

/// Forward pass, soft triple and Q on the full dataset.
FairnessState fairness_state(const ModelParams& params, const Dataset& data);

/// Gradient of Tr(Q^T Q) by the quotient rule on P(yhat, s) / (P(yhat) P(s)),
/// with P(s) frozen.
Eigen::VectorXd ermi_grad(const ModelParams& params, const Dataset& data, const FairnessState& st);
Eigen::VectorXd ermi_grad(const ModelParams& params, const Dataset& data);

/// Gradient of any scalar function of Q given its derivative dq w.r.t. the
/// entries of Q (m x k), chained through P_yhat,s and P_yhat.
Eigen::VectorXd q_chain_grad(const ModelParams& params, const Dataset& data,
                             const FairnessState& st, const Eigen::MatrixXd& dq);

struct ValueGrad {
    double value = 0.0;
    Eigen::VectorXd grad;
};

/// sqrt(v^T Q^T Q v) = ||Q v|| and its gradient with v held fixed.
/// Throws NondifferentiableError when Q v = 0.
ValueGrad sigma2_grad(const ModelParams& params, const Dataset& data, const FairnessState& st,
                      const Eigen::VectorXd& v);
ValueGrad sigma2_grad(const ModelParams& params, const Dataset& data, const Eigen::VectorXd& v);

/// Sum of singular values and its gradient sum_i u_i^T (dQ) v_i with the
/// singular vectors frozen; zero singular values contribute nothing.
ValueGrad nuclear_grad(const ModelParams& params, const Dataset& data, const FairnessState& st);

/// Group-fairness summary from hard predictions.
struct FairnessReport {
    double dpv = 0.0;
    std::optional<double> eov;  // empty when some group has no y = 1 rows
    double ermi = 1.0;
    double hgr = 0.0;
};

/// DPV = max gap of P(yhat = 1 | s) across sensitive levels, EOV the same
/// conditioned on y = 1; with more than two classes the gap is maximized over
/// classes too. ERMI / HGR come from the hard triple restricted to the
/// predicted classes with positive mass.
FairnessReport metrics(const PredictionBatch& pred, const Eigen::VectorXi& labels,
                       const Eigen::VectorXi& sensitive, int num_sensitive);
FairnessReport metrics(const PredictionBatch& pred, const Dataset& data);

}  // namespace drfermi
