#include "drfermi/solvers.hpp"

#include "drfermi/errors.hpp"
#include "drfermi/rng.hpp"

#include <algorithm>
#include <cmath>

namespace drfermi {

std::string to_string(SolverKind kind) {
    switch (kind) {
        case SolverKind::det_l1: return "det_l1";
        case SolverKind::det_l2: return "det_l2";
        case SolverKind::det_linf: return "det_linf";
        case SolverKind::sgda_l2: return "sgda_l2";
        case SolverKind::cvar: return "cvar";
        case SolverKind::group_dro: return "group_dro";
    }
    return "?";
}

SolverKind solver_kind_from_string(const std::string& name) {
    for (auto k : {SolverKind::det_l1, SolverKind::det_l2, SolverKind::det_linf, SolverKind::sgda_l2,
                   SolverKind::cvar, SolverKind::group_dro})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown solver '" + name + "'");
}

BallNorm TrainConfig::effective_norm() const {
    switch (solver) {
        case SolverKind::det_l1: return BallNorm::L1;
        case SolverKind::det_l2:
        case SolverKind::sgda_l2: return BallNorm::L2;
        case SolverKind::det_linf: return BallNorm::Linf;
        default: return robust.norm;
    }
}

long TrainConfig::effective_log_every() const {
    return log_every > 0 ? log_every : std::max<long>(1, iterations / 200);
}

void TrainConfig::validate(long num_rows) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (!(robust.epsilon >= 0.0) || !std::isfinite(robust.epsilon))
        throw ConfigError("ball radius eps must be >= 0");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("step size must be > 0");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (solver == SolverKind::sgda_l2 && (batch_size < 1 || batch_size > num_rows))
        throw ConfigError("batch size must lie in [1, n]");
    if (solver == SolverKind::cvar && !(cvar_level > 0.0 && cvar_level <= 1.0))
        throw ConfigError("cvar level must lie in (0, 1]");
    if (solver == SolverKind::group_dro && !(group_step > 0.0))
        throw ConfigError("group step must be > 0");
    if (ascent_step < 0.0) throw ConfigError("ascent step must be >= 0");
    if (!(alpha_min > 0.0 && alpha_min <= 1.0)) throw ConfigError("alpha_min must lie in (0, 1]");
}

namespace {

bool should_log(long t, const TrainConfig& cfg) { return t % cfg.effective_log_every() == 0; }

void fill_metrics(TraceRecord& rec, const FairnessState& st, const Dataset& data,
                  const RobustSpec& spec) {
    rec.fairness = ermi(st.q);
    rec.robust = robust_value(st.q, spec);
    const FairnessReport rep = metrics(st.pred, data);
    rec.dpv = rep.dpv;
    rec.eov = rep.eov;
    rec.ermi_hard = rep.ermi;
}

// Fairness gradient with the sigma_2 = 0 case mapped to the zero subgradient.
Eigen::VectorXd fairness_direction(const ModelParams& theta, const Dataset& data,
                                   const FairnessState& st, const RobustSpec& spec,
                                   TrainTrace& trace) {
    if (spec.norm == BallNorm::L1 && spec.epsilon > 0.0 &&
        (st.q.sigma.size() < 2 || st.q.sigma(1) <= 1e-12))
        ++trace.degenerate_steps;
    return robust_grad(theta, data, st, spec, DegeneratePolicy::zero_subgradient);
}

void check_finite(double value, long iteration) {
    if (!std::isfinite(value))
        throw DivergenceError("objective became non-finite at iteration " + std::to_string(iteration),
                              iteration);
}

void finish_warnings(TrainTrace& trace, long iterations) {
    if (trace.degenerate_steps > 0)
        trace.warnings.push_back(std::to_string(trace.degenerate_steps) +
                                 " steps had sigma_2(Q) = 0; the zero subgradient was used");
    if (trace.objective_increases > 0)
        trace.warnings.push_back("objective increased on " + std::to_string(trace.objective_increases) +
                                 " accepted steps");
    if (trace.alpha_clamped > iterations / 10)
        trace.warnings.push_back("alpha hit alpha_min on " + std::to_string(trace.alpha_clamped) +
                                 " steps; the fairness term is nearly inactive");
}

struct DetEval {
    FairnessState st;
    LossGrad lg;
    double robust = 0.0;
    double objective = 0.0;
};

DetEval det_eval(const ModelParams& theta, const Dataset& data, const TrainConfig& cfg,
                 const RobustSpec& spec) {
    DetEval e;
    e.st = fairness_state(theta, data);
    e.lg = loss_and_grad(theta, data);
    e.robust = robust_value(e.st.q, spec);
    e.objective = e.lg.loss + cfg.lambda * e.robust;
    return e;
}

double median(Eigen::VectorXd v) {
    std::vector<double> x(v.data(), v.data() + v.size());
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

}  // namespace

TrainResult train_deterministic(const Dataset& data, const ModelParams& model, const TrainConfig& cfg) {
    cfg.validate(data.size());
    if (cfg.solver != SolverKind::det_l1 && cfg.solver != SolverKind::det_l2 &&
        cfg.solver != SolverKind::det_linf)
        throw ConfigError("train_deterministic needs solver det_l1, det_l2 or det_linf");
    const RobustSpec spec = cfg.effective_robust();

    TrainTrace trace;
    ModelParams theta = model;
    double eta = cfg.step_size;
    DetEval cur = det_eval(theta, data, cfg, spec);
    check_finite(cur.objective, 0);

    for (long t = 0; t < cfg.iterations; ++t) {
        Eigen::VectorXd g = cur.lg.grad;
        if (cfg.lambda > 0.0) g += cfg.lambda * fairness_direction(theta, data, cur.st, spec, trace);

        if (should_log(t, cfg)) {
            TraceRecord rec;
            rec.iteration = t;
            rec.objective = cur.objective;
            rec.loss = cur.lg.loss;
            fill_metrics(rec, cur.st, data, spec);
            rec.grad_norm = g.norm();
            rec.step = eta;
            rec.w_norm = variational_ermi(cur.st.triple).w_star.norm();
            trace.records.push_back(std::move(rec));
        }

        ModelParams next_theta = theta;
        next_theta.axpy(-eta, g);
        DetEval next = det_eval(next_theta, data, cfg, spec);
        if (cfg.safeguard) {
            for (int halvings = 0; !(next.objective <= cur.objective) && halvings < 60; ++halvings) {
                eta *= 0.5;
                next_theta = theta;
                next_theta.axpy(-eta, g);
                next = det_eval(next_theta, data, cfg, spec);
            }
        }
        check_finite(next.objective, t + 1);
        // ignore round-off level changes once the iterate has settled
        if (next.objective > cur.objective + 1e-12 * std::abs(cur.objective)) ++trace.objective_increases;
        theta = std::move(next_theta);
        cur = std::move(next);
    }
    finish_warnings(trace, cfg.iterations);

    TrainResult res{std::move(theta), std::move(trace), 1.0, {}, 0.0, {}};
    res.w = variational_ermi(cur.st.triple).w_star;
    return res;
}

double w_projection_radius(const Eigen::VectorXd& p_yhat, const Eigen::VectorXd& p_s) {
    const double py = std::max(p_yhat.minCoeff(), 1e-6);
    const double ps = std::max(p_s.minCoeff(), 1e-6);
    return 2.0 / (py * std::sqrt(ps));
}

SgdaGradients sgda_gradients(const ModelParams& params, const Dataset& data,
                             std::span<const long> rows, const Eigen::MatrixXd& w, double alpha,
                             const Eigen::VectorXd& pi, double lambda, double epsilon) {
    const long b = static_cast<long>(rows.size());
    const int m = params.num_classes();
    const int k = data.num_sensitive();
    if (w.rows() != k || w.cols() != m) throw DimensionError("W must be k x m");
    if (b == 0) throw ValidationError("empty batch");

    const Eigen::MatrixXd x = gather_rows(data.features(), rows);
    const PredictionBatch pred = forward(params, x);
    const LossGrad lg = loss_and_grad(params, data, rows);

    // psi_i = sum_j F_ij c_ij with c_ij = -||W[:, j]||^2 + 2 W[s_i][j] / sqrt(pi[s_i]).
    const Eigen::RowVectorXd col_sq = w.colwise().squaredNorm();
    Eigen::MatrixXd coeff(b, m);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(k, m);
    for (long r = 0; r < b; ++r) {
        const int s = data.sensitive()(rows[static_cast<std::size_t>(r)]);
        const double inv_sqrt_pi = 1.0 / std::sqrt(pi(s));
        coeff.row(r) = -col_sq + 2.0 * inv_sqrt_pi * w.row(s);
        cross.row(s) += 2.0 * inv_sqrt_pi * pred.probs.row(r);
    }
    const Eigen::VectorXd psi = (coeff.array() * pred.probs.array()).rowwise().sum();

    SgdaGradients out;
    out.mean_loss = lg.loss;
    out.mean_psi = psi.mean();
    out.mean_probs = pred.probs.colwise().mean().transpose();
    const double scale = lambda * (1.0 + epsilon * alpha);
    out.theta = lg.grad;
    if (scale != 0.0) out.theta += prob_vjp(params, x, coeff * (scale / static_cast<double>(b)));
    out.alpha = lambda * epsilon * (out.mean_psi - 1.0 / (alpha * alpha));
    const Eigen::MatrixXd grad_w =
        (-2.0 * w * out.mean_probs.asDiagonal()) + cross / static_cast<double>(b);
    out.w = scale * grad_w;
    return out;
}

TrainResult train_sgda(const Dataset& data, const ModelParams& model, const TrainConfig& cfg) {
    cfg.validate(data.size());
    if (cfg.solver != SolverKind::sgda_l2) throw ConfigError("train_sgda needs solver sgda_l2");
    const RobustSpec spec{BallNorm::L2, cfg.robust.epsilon};
    const double eps = spec.epsilon;
    const double eta = cfg.step_size;
    const double eta_w = cfg.ascent_step > 0.0 ? cfg.ascent_step : cfg.step_size;
    const Eigen::VectorXd pi = data.sensitive_marginal();

    TrainTrace trace;
    ModelParams theta = model;
    double alpha = 1.0;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(data.num_sensitive(), model.num_classes());
    CounterRng rng(cfg.seed, 0x53474441ULL);

    for (long t = 0; t < cfg.iterations; ++t) {
        const std::vector<long> rows = sample_without_replacement(data.size(), cfg.batch_size, rng);
        const SgdaGradients sg = sgda_gradients(theta, data, rows, w, alpha, pi, cfg.lambda, eps);

        if (should_log(t, cfg)) {
            const FairnessState st = fairness_state(theta, data);
            const LossGrad lg = loss_and_grad(theta, data);
            TraceRecord rec;
            rec.iteration = t;
            rec.loss = lg.loss;
            fill_metrics(rec, st, data, spec);
            rec.objective = lg.loss + cfg.lambda * rec.robust;
            check_finite(rec.objective, t);
            rec.grad_norm = sg.theta.norm();
            rec.step = eta;
            rec.alpha = alpha;
            rec.w_norm = w.norm();
            trace.records.push_back(std::move(rec));
        }

        theta.axpy(-eta, sg.theta);
        double next_alpha = alpha - eta * sg.alpha;
        if (next_alpha <= cfg.alpha_min) {
            next_alpha = cfg.alpha_min;
            ++trace.alpha_clamped;
        }
        alpha = std::min(next_alpha, 1.0);
        w += eta_w * sg.w;
        const double radius = w_projection_radius(sg.mean_probs, pi);
        const double wn = w.norm();
        if (wn > radius) w *= radius / wn;
        if (!theta.flat().allFinite() || !w.allFinite())
            throw DivergenceError("iterate became non-finite at iteration " + std::to_string(t + 1), t + 1);
    }
    finish_warnings(trace, cfg.iterations);

    TrainResult res{std::move(theta), std::move(trace), 1.0, {}, 0.0, {}};
    res.alpha = alpha;
    res.w = std::move(w);
    return res;
}

TrainResult train_cvar(const Dataset& data, const ModelParams& model, const TrainConfig& cfg) {
    cfg.validate(data.size());
    if (cfg.solver != SolverKind::cvar) throw ConfigError("train_cvar needs solver cvar");
    const RobustSpec spec = cfg.effective_robust();
    const double beta = cfg.cvar_level;
    const auto n = static_cast<double>(data.size());

    TrainTrace trace;
    ModelParams theta = model;
    double threshold = median(per_sample_loss(theta, data));

    for (long t = 0; t < cfg.iterations; ++t) {
        const Eigen::VectorXd losses = per_sample_loss(theta, data);
        Eigen::VectorXd weights(data.size());
        long active = 0;
        for (long i = 0; i < data.size(); ++i) {
            const bool above = losses(i) > threshold;  // subgradient 0 at the kink
            weights(i) = above ? 1.0 / (beta * n) : 0.0;
            active += above;
        }
        const LossGrad lg = weighted_loss_and_grad(theta, data, weights);
        const FairnessState st = fairness_state(theta, data);
        const double accuracy_term = lg.loss - threshold * static_cast<double>(active) / (beta * n) + threshold;
        const double robust = robust_value(st.q, spec);
        const double objective = accuracy_term + cfg.lambda * robust;
        check_finite(objective, t);

        Eigen::VectorXd g = lg.grad;
        if (cfg.lambda > 0.0) g += cfg.lambda * fairness_direction(theta, data, st, spec, trace);
        const double g_threshold = 1.0 - static_cast<double>(active) / (beta * n);

        if (should_log(t, cfg)) {
            TraceRecord rec;
            rec.iteration = t;
            rec.objective = objective;
            rec.loss = losses.mean();
            fill_metrics(rec, st, data, spec);
            rec.grad_norm = std::sqrt(g.squaredNorm() + g_threshold * g_threshold);
            rec.step = cfg.step_size;
            rec.threshold = threshold;
            trace.records.push_back(std::move(rec));
        }

        theta.axpy(-cfg.step_size, g);
        threshold -= cfg.step_size * g_threshold;
    }
    finish_warnings(trace, cfg.iterations);

    TrainResult res{std::move(theta), std::move(trace), 1.0, {}, 0.0, {}};
    res.threshold = threshold;
    return res;
}

Eigen::VectorXd group_losses(const Eigen::VectorXd& per_sample, const Dataset& data) {
    const int k = data.num_sensitive();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(k);
    for (long i = 0; i < data.size(); ++i) {
        sum(data.sensitive()(i)) += per_sample(i);
        count(data.sensitive()(i)) += 1.0;
    }
    return sum.cwiseQuotient(count);
}

Eigen::VectorXd update_group_weights(const Eigen::VectorXd& weights, const Eigen::VectorXd& group_losses,
                                     double step) {
    if (weights.size() != group_losses.size()) throw DimensionError("one loss per group expected");
    // shift by the max loss before exponentiating; cancels in the normalization
    const double shift = group_losses.maxCoeff();
    Eigen::VectorXd q = weights.array() * (step * (group_losses.array() - shift)).exp();
    return q / q.sum();
}

TrainResult train_group_dro(const Dataset& data, const ModelParams& model, const TrainConfig& cfg) {
    cfg.validate(data.size());
    if (cfg.solver != SolverKind::group_dro) throw ConfigError("train_group_dro needs solver group_dro");
    const RobustSpec spec = cfg.effective_robust();
    const int k = data.num_sensitive();
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (long i = 0; i < data.size(); ++i) counts(data.sensitive()(i)) += 1.0;

    TrainTrace trace;
    ModelParams theta = model;
    Eigen::VectorXd q = Eigen::VectorXd::Constant(k, 1.0 / k);

    for (long t = 0; t < cfg.iterations; ++t) {
        const Eigen::VectorXd losses = per_sample_loss(theta, data);
        const Eigen::VectorXd lg_group = group_losses(losses, data);
        q = update_group_weights(q, lg_group, cfg.group_step);
        Eigen::VectorXd weights(data.size());
        for (long i = 0; i < data.size(); ++i) {
            const int s = data.sensitive()(i);
            weights(i) = q(s) / counts(s);
        }
        const LossGrad lg = weighted_loss_and_grad(theta, data, weights);
        const FairnessState st = fairness_state(theta, data);
        const double robust = robust_value(st.q, spec);
        const double objective = lg_group.maxCoeff() + cfg.lambda * robust;
        check_finite(objective, t);

        Eigen::VectorXd g = lg.grad;
        if (cfg.lambda > 0.0) g += cfg.lambda * fairness_direction(theta, data, st, spec, trace);

        if (should_log(t, cfg)) {
            TraceRecord rec;
            rec.iteration = t;
            rec.objective = objective;
            rec.loss = losses.mean();
            fill_metrics(rec, st, data, spec);
            rec.grad_norm = g.norm();
            rec.step = cfg.step_size;
            rec.group_weights.assign(q.data(), q.data() + q.size());
            trace.records.push_back(std::move(rec));
        }
        theta.axpy(-cfg.step_size, g);
    }
    finish_warnings(trace, cfg.iterations);

    TrainResult res{std::move(theta), std::move(trace), 1.0, {}, 0.0, {}};
    res.group_weights = std::move(q);
    return res;
}

TrainResult train(const Dataset& data, const ModelParams& model, const TrainConfig& cfg) {
    switch (cfg.solver) {
        case SolverKind::det_l1:
        case SolverKind::det_l2:
        case SolverKind::det_linf: return train_deterministic(data, model, cfg);
        case SolverKind::sgda_l2: return train_sgda(data, model, cfg);
        case SolverKind::cvar: return train_cvar(data, model, cfg);
        case SolverKind::group_dro: return train_group_dro(data, model, cfg);
    }
    throw ConfigError("unknown solver");
}

SqrtMin sqrt_min_identity(double z) {
    if (!(z > 0.0) || !std::isfinite(z)) throw DomainError("sqrt_min_identity needs z > 0");
    const double root = std::sqrt(z);
    return {1.0 / root, root};
}

}  // namespace drfermi
