#include "drfermi/fairness.hpp"

#include <algorithm>
#include <limits>

namespace drfermi {

ProbTriple<double> estimate_probs(const PredictionBatch& pred, const Eigen::VectorXi& sensitive,
                                  int num_sensitive, ProbMode mode) {
    const long n = pred.probs.rows();
    const long m = pred.probs.cols();
    if (sensitive.size() != n) throw DimensionError("sensitive vector length != prediction rows");
    if (n == 0) throw ValidationError("empty prediction batch");

    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(m, num_sensitive);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(num_sensitive);
    for (long i = 0; i < n; ++i) {
        const int s = sensitive(i);
        if (s < 0 || s >= num_sensitive) throw ValidationError("sensitive level out of range");
        count(s) += 1.0;
        if (mode == ProbMode::soft)
            joint.col(s) += pred.probs.row(i).transpose();
        else
            joint(pred.hard(i), s) += 1.0;
    }
    for (int l = 0; l < num_sensitive; ++l)
        if (count(l) == 0.0)
            throw DegenerateDistributionError("sensitive level " + std::to_string(l) + " has zero mass");
    const double inv_n = 1.0 / static_cast<double>(n);
    ProbTriple<double> pt;
    pt.p_joint = joint * inv_n;
    pt.p_yhat = pt.p_joint.rowwise().sum();
    pt.p_s = count * inv_n;
    return pt;
}

FairnessState fairness_state(const ModelParams& params, const Dataset& data) {
    FairnessState st;
    st.pred = forward(params, data);
    st.triple = estimate_probs(st.pred, data.sensitive(), data.num_sensitive(), ProbMode::soft);
    st.q = build_q(st.triple);
    return st;
}

namespace {

// Per-sample coefficients for prob_vjp from derivatives w.r.t. the joint
// entries P(yhat = j, s = l) and the marginals P(yhat = j).
Eigen::MatrixXd sample_coefficients(const Dataset& data, const Eigen::MatrixXd& d_joint,
                                    const Eigen::VectorXd& d_marginal) {
    const long n = data.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd g(n, d_joint.rows());
    for (long i = 0; i < n; ++i)
        g.row(i) = (d_joint.col(data.sensitive()(i)) + d_marginal).transpose() * inv_n;
    return g;
}

}  // namespace

Eigen::VectorXd ermi_grad(const ModelParams& params, const Dataset& data, const FairnessState& st) {
    const auto& pt = st.triple;
    const long m = pt.p_joint.rows();
    const long k = pt.p_joint.cols();
    Eigen::MatrixXd d_joint(m, k);
    Eigen::VectorXd d_marginal = Eigen::VectorXd::Zero(m);
    for (long j = 0; j < m; ++j) {
        for (long l = 0; l < k; ++l) {
            const double pj = pt.p_joint(j, l);
            d_joint(j, l) = 2.0 * pj / (pt.p_yhat(j) * pt.p_s(l));
            d_marginal(j) -= pj * pj / (pt.p_yhat(j) * pt.p_yhat(j) * pt.p_s(l));
        }
    }
    return prob_vjp(params, data.features(), sample_coefficients(data, d_joint, d_marginal));
}

Eigen::VectorXd ermi_grad(const ModelParams& params, const Dataset& data) {
    return ermi_grad(params, data, fairness_state(params, data));
}

Eigen::VectorXd q_chain_grad(const ModelParams& params, const Dataset& data,
                             const FairnessState& st, const Eigen::MatrixXd& dq) {
    const auto& pt = st.triple;
    const long m = pt.p_joint.rows();
    const long k = pt.p_joint.cols();
    if (dq.rows() != m || dq.cols() != k) throw DimensionError("dq must be m x k");
    Eigen::MatrixXd d_joint(m, k);
    Eigen::VectorXd d_marginal = Eigen::VectorXd::Zero(m);
    for (long j = 0; j < m; ++j) {
        for (long l = 0; l < k; ++l) {
            d_joint(j, l) = dq(j, l) / std::sqrt(pt.p_yhat(j) * pt.p_s(l));
            d_marginal(j) -= 0.5 * dq(j, l) * st.q.q(j, l) / pt.p_yhat(j);
        }
    }
    return prob_vjp(params, data.features(), sample_coefficients(data, d_joint, d_marginal));
}

ValueGrad sigma2_grad(const ModelParams& params, const Dataset& data, const FairnessState& st,
                      const Eigen::VectorXd& v) {
    if (v.size() != st.q.q.cols()) throw DimensionError("v must have length k");
    const Eigen::VectorXd qv = st.q.q * v;
    const double norm = qv.norm();
    if (!(norm > 1e-12))
        throw NondifferentiableError("v^T Q^T Q v = 0: sqrt is not differentiable here");
    const Eigen::MatrixXd dq = qv * v.transpose() / norm;
    return {norm, q_chain_grad(params, data, st, dq)};
}

ValueGrad sigma2_grad(const ModelParams& params, const Dataset& data, const Eigen::VectorXd& v) {
    return sigma2_grad(params, data, fairness_state(params, data), v);
}

ValueGrad nuclear_grad(const ModelParams& params, const Dataset& data, const FairnessState& st) {
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(st.q.q.rows(), st.q.q.cols());
    for (long i = 0; i < st.q.sigma.size(); ++i)
        if (st.q.sigma(i) > 1e-12) dq += st.q.u.col(i) * st.q.v.col(i).transpose();
    return {nuclear_norm(st.q), q_chain_grad(params, data, st, dq)};
}

FairnessReport metrics(const PredictionBatch& pred, const Eigen::VectorXi& labels,
                       const Eigen::VectorXi& sensitive, int num_sensitive) {
    const long n = pred.hard.size();
    const long m = pred.probs.cols();
    if (labels.size() != n || sensitive.size() != n)
        throw DimensionError("label/sensitive length != prediction length");

    // rate(j, l): P(yhat = j | s = l), tp(j, l): the same restricted to y = 1.
    Eigen::MatrixXd rate = Eigen::MatrixXd::Zero(m, num_sensitive);
    Eigen::MatrixXd tp = Eigen::MatrixXd::Zero(m, num_sensitive);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(num_sensitive);
    Eigen::VectorXd pos = Eigen::VectorXd::Zero(num_sensitive);
    for (long i = 0; i < n; ++i) {
        const int s = sensitive(i);
        count(s) += 1.0;
        rate(pred.hard(i), s) += 1.0;
        if (labels(i) == 1) {
            pos(s) += 1.0;
            tp(pred.hard(i), s) += 1.0;
        }
    }

    const auto max_gap = [&](const Eigen::MatrixXd& num, const Eigen::VectorXd& den) {
        double gap = 0.0;
        const long first_class = m == 2 ? 1 : 0;
        const long last_class = m == 2 ? 1 : m - 1;
        for (long j = first_class; j <= last_class; ++j) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (int l = 0; l < num_sensitive; ++l) {
                if (den(l) == 0.0) continue;
                const double r = num(j, l) / den(l);
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
            if (hi >= lo) gap = std::max(gap, hi - lo);
        }
        return gap;
    };

    FairnessReport rep;
    rep.dpv = max_gap(rate, count);
    if ((pos.array() > 0.0).count() == num_sensitive) rep.eov = max_gap(tp, pos);

    ProbTriple<double> pt = estimate_probs(pred, sensitive, num_sensitive, ProbMode::hard);
    std::vector<long> support;
    for (long j = 0; j < m; ++j)
        if (pt.p_yhat(j) > 0.0) support.push_back(j);
    if (support.size() <= 1) {
        rep.ermi = 1.0;
        rep.hgr = 0.0;
        return rep;
    }
    ProbTriple<double> restricted;
    restricted.p_joint.resize(static_cast<long>(support.size()), num_sensitive);
    restricted.p_yhat.resize(static_cast<long>(support.size()));
    for (std::size_t r = 0; r < support.size(); ++r) {
        restricted.p_joint.row(static_cast<long>(r)) = pt.p_joint.row(support[r]);
        restricted.p_yhat(static_cast<long>(r)) = pt.p_yhat(support[r]);
    }
    restricted.p_s = pt.p_s;
    const QMatrix<double> q = build_q(restricted);
    rep.ermi = ermi(q);
    rep.hgr = hgr(q);
    return rep;
}

FairnessReport metrics(const PredictionBatch& pred, const Dataset& data) {
    return metrics(pred, data.labels(), data.sensitive(), data.num_sensitive());
}

}  // namespace drfermi
