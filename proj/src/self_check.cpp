#include "drfermi/self_check.hpp"

#include "drfermi/errors.hpp"
#include "drfermi/fairness.hpp"
#include "drfermi/rng.hpp"
#include "drfermi/robust.hpp"
#include "drfermi/solvers.hpp"

#include <algorithm>
#include <cmath>

namespace drfermi {

Fault fault_from_string(const std::string& name) {
    if (name == "none" || name.empty()) return Fault::none;
    if (name == "ermi-sign" || name == "ermi_sign") return Fault::ermi_sign;
    throw ConfigError("unknown fault '" + name + "' (expected none or ermi-sign)");
}

Eigen::VectorXd central_difference(const std::function<double(const ModelParams&)>& f,
                                   const ModelParams& at, double h) {
    Eigen::VectorXd g(at.size());
    Eigen::VectorXd x = at.flat();
    for (long i = 0; i < at.size(); ++i) {
        const double keep = x(i);
        x(i) = keep + h;
        const double up = f(at.with_flat(x));
        x(i) = keep - h;
        const double down = f(at.with_flat(x));
        x(i) = keep;
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
    return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

namespace {

Eigen::MatrixXd random_joint(long m, long k, CounterRng& rng) {
    Eigen::MatrixXd j(m, k);
    for (long r = 0; r < m; ++r)
        for (long c = 0; c < k; ++c) j(r, c) = 0.05 + rng.uniform();
    return j / j.sum();
}

Dataset random_dataset(long n, long d, int m, int k, CounterRng& rng) {
    Eigen::MatrixXd x(n, d);
    Eigen::VectorXi y(n), s(n);
    for (long i = 0; i < n; ++i) {
        for (long c = 0; c < d; ++c) x(i, c) = rng.normal();
        y(i) = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
        s(i) = i < k ? static_cast<int>(i) : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        x(i, 0) += 0.8 * s(i);  // some dependence so sigma_2 > 0
    }
    return Dataset(std::move(x), std::move(y), std::move(s), m, k);
}

ModelParams random_params(const Dataset& data, bool mlp, CounterRng& rng) {
    ModelParams p = mlp ? ModelParams::mlp1(data.dim(), data.num_labels(), 4, rng.next_u64())
                        : ModelParams::logistic(data.dim(), data.num_labels());
    Eigen::VectorXd flat = p.flat();
    for (long i = 0; i < flat.size(); ++i) flat(i) += 0.7 * rng.normal();
    return p.with_flat(flat);
}

double soft_value(const ModelParams& p, const Dataset& data, const RobustSpec& spec) {
    return robust_value(fairness_state(p, data).q, spec);
}

void track(CheckResult& r, double residual) {
    ++r.cases;
    if (!std::isfinite(residual)) residual = std::numeric_limits<double>::infinity();
    r.residual = std::max(r.residual, residual);
}

CheckResult closed_form_ball_check(const SelfCheckOptions& opts, CounterRng& rng) {
    CheckResult r{"robust_value vs ball search", false, 0.0, 1e-4};
    for (long t = 0; t < opts.ball_trials; ++t) {
        const long m = 2 + static_cast<long>(rng.below(3));
        const long k = 2 + static_cast<long>(rng.below(3));
        const auto qm = build_q(ProbTriple<double>::from_joint(random_joint(m, k, rng)));
        for (double eps : {0.05, 0.1, 0.5})
            for (BallNorm norm : {BallNorm::L1, BallNorm::L2, BallNorm::Linf}) {
                const RobustSpec spec{norm, eps};
                track(r, std::abs(robust_value(qm, spec) - brute_force_ball_max(qm, spec, 1e-3).value));
            }
    }
    r.passed = r.residual <= r.tolerance;
    return r;
}

std::vector<CheckResult> variational_checks(CounterRng& rng) {
    CheckResult closed{"variational W* value = ERMI - 1", false, 0.0, 1e-8};
    CheckResult ascent{"variational ascent oracle", false, 0.0, 1e-6};
    CheckResult psi{"mean psi at W* = ERMI", false, 0.0, 1e-10};
    for (int t = 0; t < 50; ++t) {
        const long m = 2 + static_cast<long>(rng.below(3));
        const long k = 2 + static_cast<long>(rng.below(3));
        const auto pt = ProbTriple<double>::from_joint(random_joint(m, k, rng));
        const auto ve = variational_ermi(pt);
        const double target = ermi(build_q(pt)) - 1.0;
        track(closed, std::abs(ve.value - target));

        // plain gradient ascent on the concave quadratic from a random W
        Eigen::MatrixXd w(k, m);
        for (long i = 0; i < w.size(); ++i) w(i) = rng.normal();
        const Eigen::MatrixXd lin = pt.p_s.array().rsqrt().matrix().asDiagonal() * pt.p_joint.transpose();
        const double step = 0.5 / pt.p_yhat.maxCoeff();
        for (int it = 0; it < 100000; ++it) {
            const Eigen::MatrixXd g = -2.0 * w * pt.p_yhat.asDiagonal() + 2.0 * lin;
            w += step * g;
            if (g.norm() < 1e-13) break;
        }
        track(ascent, std::abs(variational_objective(pt, w) - target));
    }
    for (int t = 0; t < 20; ++t) {
        const Dataset data = random_dataset(25, 3, 2 + static_cast<int>(rng.below(2)),
                                            2 + static_cast<int>(rng.below(2)), rng);
        const ModelParams p = random_params(data, false, rng);
        const FairnessState st = fairness_state(p, data);
        const auto ve = variational_ermi(st.triple);
        double sum = 0.0;
        for (long i = 0; i < data.size(); ++i)
            sum += psi_kernel(st.pred.probs.row(i), data.sensitive()(i), st.triple.p_s, ve.w_star);
        track(psi, std::abs(sum / static_cast<double>(data.size()) - ermi(st.q)));
    }
    for (auto* c : {&closed, &ascent, &psi}) c->passed = c->residual <= c->tolerance;
    return {closed, ascent, psi};
}

CheckResult sqrt_check(const SelfCheckOptions& opts, CounterRng& rng) {
    CheckResult r{"sqrt identity vs grid search", false, 0.0, 1e-8};
    for (long t = 0; t < opts.sqrt_samples; ++t) {
        const double z = 10.0 * (1.0 - rng.uniform());  // (0, 10]
        const auto f = [z](double a) { return 0.5 * (z * a + 1.0 / a); };
        // log-spaced grid on [1e-4, 100], then repeated zoom around the best point
        double lo = std::log(1e-4), hi = std::log(100.0);
        double best_a = 1.0, best = f(1.0);
        for (int level = 0; level < 12; ++level) {
            const int pts = 201;
            for (int i = 0; i < pts; ++i) {
                const double a = std::exp(lo + (hi - lo) * i / (pts - 1));
                if (f(a) < best) {
                    best = f(a);
                    best_a = a;
                }
            }
            const double span = (hi - lo) / (pts - 1);
            lo = std::log(best_a) - span;
            hi = std::log(best_a) + span;
        }
        const SqrtMin sm = sqrt_min_identity(z);
        track(r, std::max(std::abs(sm.value - best), std::abs(f(sm.alpha_star) - sm.value)));
    }
    r.passed = r.residual <= r.tolerance;
    return r;
}

std::vector<CheckResult> gradient_checks(const SelfCheckOptions& opts, CounterRng& rng) {
    const double tol = 1e-4;
    CheckResult loss{"loss_and_grad vs finite differences", false, 0.0, tol};
    CheckResult jac{"prob_jacobian vs finite differences", false, 0.0, tol};
    CheckResult er{"ermi_grad vs finite differences", false, 0.0, tol};
    CheckResult s2{"sigma2_grad vs finite differences", false, 0.0, tol};
    CheckResult l1{"robust_grad l1 vs finite differences", false, 0.0, tol};
    CheckResult l2{"robust_grad l2 vs finite differences", false, 0.0, tol};
    CheckResult li{"robust_grad linf vs finite differences", false, 0.0, tol};
    const double sign = opts.fault == Fault::ermi_sign ? -1.0 : 1.0;

    for (long t = 0; t < opts.gradient_points; ++t) {
        const int m = 2 + static_cast<int>(rng.below(2));
        const int k = 2 + static_cast<int>(rng.below(2));
        const Dataset data = random_dataset(30, 3, m, k, rng);
        const ModelParams p = random_params(data, t % 2 == 1, rng);
        const FairnessState st = fairness_state(p, data);

        track(loss, relative_error(loss_and_grad(p, data).grad,
                                   central_difference([&](const ModelParams& q) { return loss_and_grad(q, data).loss; }, p)));

        const std::vector<long> rows{0, 1, 2};
        const Eigen::MatrixXd jm = prob_jacobian(p, data, rows);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (int j = 0; j < m; ++j) {
                const auto fd = central_difference(
                    [&](const ModelParams& q) { return forward(q, data).probs(rows[r], j); }, p);
                track(jac, relative_error(jm.row(static_cast<long>(r) * m + j).transpose(), fd));
            }

        const Eigen::VectorXd eg = sign * ermi_grad(p, data, st);
        track(er, relative_error(eg, central_difference(
                                         [&](const ModelParams& q) { return ermi(fairness_state(q, data).q); }, p)));

        const Eigen::VectorXd v = st.q.v.col(1);
        const auto sg = sigma2_grad(p, data, st, v);
        track(s2, relative_error(sg.grad, central_difference(
                                              [&](const ModelParams& q) {
                                                  return (fairness_state(q, data).q.q * v).norm();
                                              },
                                              p)));

        for (auto [norm, res] : {std::pair{BallNorm::L1, &l1}, {BallNorm::L2, &l2}, {BallNorm::Linf, &li}}) {
            const RobustSpec spec{norm, 0.3};
            // the robust gradient is ermi_grad plus the ball term; the fault
            // flips the ermi part only
            Eigen::VectorXd g = robust_grad(p, data, st, spec);
            if (opts.fault == Fault::ermi_sign) {
                const Eigen::VectorXd e = ermi_grad(p, data, st);
                g -= (norm == BallNorm::L2 ? 2.0 * (1.0 + 0.3 / std::sqrt(ermi(st.q))) : 2.0) * e;
            }
            track(*res, relative_error(g, central_difference(
                                              [&](const ModelParams& q) { return soft_value(q, data, spec); }, p)));
        }
    }
    std::vector<CheckResult> out{loss, jac, er, s2, l1, l2, li};
    for (auto& c : out) c.passed = c.residual <= c.tolerance;
    return out;
}

CheckResult sgda_cover_check(CounterRng& rng) {
    CheckResult r{"sgda batch cover mean = full batch", false, 0.0, 1e-10};
    for (int t = 0; t < 5; ++t) {
        const Dataset data = random_dataset(40, 3, 2, 2, rng);
        const ModelParams p = random_params(data, t % 2 == 1, rng);
        Eigen::MatrixXd w(2, 2);
        for (long i = 0; i < w.size(); ++i) w(i) = rng.normal();
        const Eigen::VectorXd pi = data.sensitive_marginal();
        std::vector<long> all(static_cast<std::size_t>(data.size()));
        for (long i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
        shuffle(all, rng);
        const auto full = sgda_gradients(p, data, all, w, 0.7, pi, 2.0, 0.5);
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(p.size());
        Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(2, 2);
        double alpha = 0.0;
        const long b = 8;
        for (long start = 0; start < data.size(); start += b) {
            const std::span<const long> rows(all.data() + start, static_cast<std::size_t>(b));
            const auto part = sgda_gradients(p, data, rows, w, 0.7, pi, 2.0, 0.5);
            theta += part.theta;
            gw += part.w;
            alpha += part.alpha;
        }
        const double parts = static_cast<double>(data.size() / b);
        track(r, std::max({(theta / parts - full.theta).lpNorm<Eigen::Infinity>(),
                           (gw / parts - full.w).lpNorm<Eigen::Infinity>(), std::abs(alpha / parts - full.alpha)}));
    }
    r.passed = r.residual <= r.tolerance;
    return r;
}

}  // namespace

std::vector<CheckResult> run_self_check(const SelfCheckOptions& opts) {
    CounterRng rng(opts.seed, 0xC4EC);
    std::vector<CheckResult> out;
    out.push_back(closed_form_ball_check(opts, rng));
    for (auto& c : variational_checks(rng)) out.push_back(std::move(c));
    out.push_back(sqrt_check(opts, rng));
    for (auto& c : gradient_checks(opts, rng)) out.push_back(std::move(c));
    out.push_back(sgda_cover_check(rng));
    return out;
}

}  // namespace drfermi
