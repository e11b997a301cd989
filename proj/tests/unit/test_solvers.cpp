#include "drfermi/errors.hpp"
#include "drfermi/solvers.hpp"
#include "drfermi/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace drfermi;

namespace {

Dataset data(long n, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n = n;
    spec.dim = 3;
    spec.seed = seed;
    return make_adult_like(spec);
}

TrainConfig config(SolverKind solver, double lambda, double eps, double step, long iterations) {
    TrainConfig cfg;
    cfg.solver = solver;
    cfg.lambda = lambda;
    cfg.robust.epsilon = eps;
    cfg.step_size = step;
    cfg.iterations = iterations;
    return cfg;
}

double final_ermi(const Dataset& d, const TrainResult& r) { return ermi(fairness_state(r.params, d).q); }

// plain full-batch gradient descent on the mean cross-entropy
ModelParams reference_erm(const Dataset& d, ModelParams p, double step, long iterations) {
    for (long t = 0; t < iterations; ++t) p.axpy(-step, loss_and_grad(p, d).grad);
    return p;
}

}  // namespace

TEST_CASE("TrainConfig::validate rejects out-of-range fields") {
    const auto bad = [](auto edit) {
        TrainConfig c;
        edit(c);
        return c;
    };
    CHECK_NOTHROW(TrainConfig{}.validate(100));
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.lambda = -1; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.robust.epsilon = -0.1; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.step_size = 0; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.iterations = 0; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.solver = SolverKind::sgda_l2; c.batch_size = 101; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.solver = SolverKind::cvar; c.cvar_level = 0; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.solver = SolverKind::cvar; c.cvar_level = 1.5; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.solver = SolverKind::group_dro; c.group_step = 0; }).validate(100), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.alpha_min = 0; }).validate(100), ConfigError);
    // solver-specific fields are only checked for their solver
    CHECK_NOTHROW(bad([](TrainConfig& c) { c.batch_size = 101; }).validate(100));
}

TEST_CASE("defaults and solver names") {
    const TrainConfig c;
    CHECK(c.step_size == 1e-5);
    CHECK(c.iterations == 3000);
    CHECK(c.effective_log_every() == 15);
    for (SolverKind k : {SolverKind::det_l1, SolverKind::det_l2, SolverKind::det_linf, SolverKind::sgda_l2,
                         SolverKind::cvar, SolverKind::group_dro})
        CHECK(solver_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(solver_kind_from_string("adam"), ConfigError);
    CHECK(config(SolverKind::det_l1, 1, 0.1, 1, 1).effective_norm() == BallNorm::L1);
    CHECK(config(SolverKind::sgda_l2, 1, 0.1, 1, 1).effective_norm() == BallNorm::L2);
}

TEST_CASE("trace holds ceil(T / L) records") {
    const Dataset d = data(200, 1);
    for (long t : {1L, 7L, 20L}) {
        TrainConfig cfg = config(SolverKind::det_l2, 1.0, 0.1, 0.1, t);
        cfg.log_every = 3;
        const TrainResult r = train(d, ModelParams::logistic(d.dim(), 2), cfg);
        CHECK(static_cast<long>(r.trace.records.size()) == (t + 2) / 3);
        CHECK(r.trace.records.front().iteration == 0);
    }
}

TEST_CASE("fairness penalty lowers ERMI") {
    const Dataset d = data(800, 2);
    const ModelParams init = ModelParams::logistic(d.dim(), 2);
    const TrainResult plain = train(d, init, config(SolverKind::det_l2, 0.0, 0.0, 0.5, 200));
    const TrainResult fair = train(d, init, config(SolverKind::det_l2, 10.0, 0.0, 0.5, 200));
    CHECK(final_ermi(d, fair) < final_ermi(d, plain));
}

TEST_CASE("L2 robust objective decreases over iterations") {
    const Dataset d = data(800, 3);
    // start from an unconstrained fit; the zero model is already at independence
    const ModelParams fitted = reference_erm(d, ModelParams::logistic(d.dim(), 2), 0.5, 200);
    for (double eps : {0.1, 0.5}) {
        TrainConfig cfg = config(SolverKind::det_l2, 10.0, eps, 0.05, 200);
        cfg.log_every = 1;
        const TrainResult r = train(d, fitted, cfg);
        CHECK(r.trace.records.back().robust < r.trace.records.front().robust);
        CHECK(r.trace.records.back().objective < r.trace.records.front().objective);
    }
}

TEST_CASE("safeguard keeps the objective monotone") {
    const Dataset d = data(500, 4);
    for (SolverKind k : {SolverKind::det_l1, SolverKind::det_l2, SolverKind::det_linf}) {
        TrainConfig cfg = config(k, 5.0, 0.2, 50.0, 60);
        cfg.safeguard = true;
        cfg.log_every = 1;
        const TrainResult r = train(d, ModelParams::mlp1(d.dim(), 2, 4, 1), cfg);
        CHECK(r.trace.objective_increases == 0);
        for (std::size_t i = 1; i < r.trace.records.size(); ++i)
            CHECK(r.trace.records[i].objective <= r.trace.records[i - 1].objective);
    }
}

TEST_CASE("huge steps raise DivergenceError") {
    const Dataset d = data(200, 5);
    CHECK_THROWS_AS(train(d, ModelParams::logistic(d.dim(), 2), config(SolverKind::det_l2, 1.0, 0.1, 1e308, 20)),
                    DivergenceError);
}

TEST_CASE("det_l1 at independence uses the zero subgradient and warns") {
    const Dataset d = data(200, 6);
    const TrainResult r = train(d, ModelParams::logistic(d.dim(), 2), config(SolverKind::det_l1, 1.0, 0.1, 1e-3, 1));
    CHECK(r.trace.degenerate_steps == 1);
    CHECK_FALSE(r.trace.warnings.empty());
}

TEST_CASE("SGDA full-batch direction at W*, alpha = 1/sqrt(Tr) equals the deterministic L2 gradient") {
    const Dataset d = data(300, 7);
    ModelParams p = ModelParams::logistic(d.dim(), 2);
    Eigen::VectorXd flat(p.size());
    for (long i = 0; i < flat.size(); ++i) flat(i) = 0.3 * std::sin(1.7 * static_cast<double>(i) + 0.4);
    p = p.with_flat(flat);
    const double lambda = 2.0, eps = 0.3;

    const FairnessState st = fairness_state(p, d);
    const double tr = ermi(st.q);
    const Eigen::MatrixXd w = variational_ermi(st.triple).w_star;
    std::vector<long> rows(static_cast<std::size_t>(d.size()));
    std::iota(rows.begin(), rows.end(), 0L);
    const SgdaGradients sg = sgda_gradients(p, d, rows, w, 1.0 / std::sqrt(tr), d.sensitive_marginal(), lambda, eps);

    const Eigen::VectorXd expect = loss_and_grad(p, d).grad + lambda * robust_grad(p, d, {BallNorm::L2, eps});
    CHECK((sg.theta - expect).norm() / expect.norm() < 1e-10);
    CHECK(sg.mean_psi == doctest::Approx(tr).epsilon(1e-12));
    // W* is stationary for the inner maximization, alpha* for the outer
    CHECK(sg.w.norm() < 1e-10);
    CHECK(std::abs(sg.alpha) < 1e-10);
}

TEST_CASE("SGDA keeps W within the projection radius and alpha in (0, 1]") {
    const Dataset d = data(400, 8);
    TrainConfig cfg = config(SolverKind::sgda_l2, 5.0, 0.5, 1e-6, 50);
    cfg.ascent_step = 100.0;
    cfg.batch_size = 16;
    cfg.log_every = 1;
    const TrainResult r = train(d, ModelParams::logistic(d.dim(), 2), cfg);
    const double bound = w_projection_radius(Eigen::VectorXd::Constant(2, 1e-6), d.sensitive_marginal());
    for (const TraceRecord& rec : r.trace.records) {
        CHECK(rec.w_norm <= bound);
        CHECK(rec.alpha > 0.0);
        CHECK(rec.alpha <= 1.0);
    }
    CHECK(r.alpha > 0.0);
    CHECK(r.alpha <= 1.0);
}

TEST_CASE("SGDA alpha clamp is counted and reported") {
    const Dataset d = data(300, 9);
    TrainConfig cfg = config(SolverKind::sgda_l2, 1.0, 0.5, 0.01, 200);
    cfg.alpha_min = 1.0;
    cfg.ascent_step = 1.0;  // W has to approach W* before the alpha gradient turns positive
    cfg.batch_size = 32;
    const TrainResult r = train(d, ModelParams::logistic(d.dim(), 2), cfg);
    CHECK(r.trace.alpha_clamped > 0);
    CHECK(r.alpha == 1.0);
    CHECK_FALSE(r.trace.warnings.empty());
}

TEST_CASE("w_projection_radius") {
    Eigen::VectorXd py(2), ps(2);
    py << 0.5, 0.5;
    ps << 0.25, 0.75;
    CHECK(w_projection_radius(py, ps) == doctest::Approx(2.0 / (0.5 * 0.5)));
    py << 0.0, 1.0;
    CHECK(w_projection_radius(py, ps) == doctest::Approx(2.0 / (1e-6 * 0.5)));
}

TEST_CASE("sqrt_min_identity") {
    for (double z : {0.25, 1.0, 2.0, 9.0}) {
        const SqrtMin s = sqrt_min_identity(z);
        CHECK(s.value == doctest::Approx(std::sqrt(z)));
        CHECK(s.alpha_star == doctest::Approx(1.0 / std::sqrt(z)));
        for (double a : {0.5 * s.alpha_star, 2.0 * s.alpha_star})
            CHECK((z * a + 1.0 / a) / 2.0 >= s.value);
    }
    CHECK_THROWS_AS(sqrt_min_identity(0.0), DomainError);
    CHECK_THROWS_AS(sqrt_min_identity(-1.0), DomainError);
}

TEST_CASE("CVaR at level 1 converges to the ERM solution") {
    const Dataset d = data(300, 10);
    const ModelParams init = ModelParams::logistic(d.dim(), 2);
    // the threshold starts at the median and drops below every loss, after
    // which all rows carry weight 1 / n
    const TrainResult r = train(d, init, config(SolverKind::cvar, 0.0, 0.0, 0.3, 2000));
    const ModelParams ref = reference_erm(d, init, 0.3, 2000);
    CHECK(per_sample_loss(r.params, d).mean() == doctest::Approx(per_sample_loss(ref, d).mean()).epsilon(1e-4));
    CHECK(r.threshold < per_sample_loss(r.params, d).minCoeff());
}

TEST_CASE("CVaR threshold tracks the loss quantile") {
    const Dataset d = data(1000, 11);
    const ModelParams init = ModelParams::logistic(d.dim(), 2);
    const ModelParams fitted = reference_erm(d, init, 0.5, 100);
    TrainConfig c = config(SolverKind::cvar, 0.0, 0.0, 0.01, 10000);
    c.cvar_level = 0.1;
    // start from a fitted model so the threshold has a spread of losses to track
    const TrainResult r = train(d, fitted, c);
    Eigen::VectorXd losses = per_sample_loss(r.params, d);
    std::sort(losses.data(), losses.data() + losses.size());
    const double q90 = losses(static_cast<long>(0.9 * static_cast<double>(losses.size())));
    CHECK(std::abs(r.threshold - q90) < 0.05 * std::max(1.0, q90));
}

TEST_CASE("group weights: uniform fixed point and monotone response") {
    Eigen::VectorXd q = Eigen::VectorXd::Constant(3, 1.0 / 3);
    CHECK(update_group_weights(q, Eigen::VectorXd::Constant(3, 0.7), 0.5).isApprox(q));
    Eigen::VectorXd losses(2);
    losses << 1.0, 2.0;
    Eigen::VectorXd w = Eigen::VectorXd::Constant(2, 0.5);
    for (int t = 0; t < 10; ++t) {
        const Eigen::VectorXd next = update_group_weights(w, losses, 0.1);
        CHECK(next(1) > w(1));
        CHECK(next.sum() == doctest::Approx(1.0));
        w = next;
    }
    CHECK(update_group_weights(w, Eigen::VectorXd::Constant(2, 1e6), 1.0).allFinite());
    CHECK_THROWS_AS(update_group_weights(w, Eigen::VectorXd::Ones(3), 0.1), DimensionError);
}

TEST_CASE("group DRO lowers the worst-group loss relative to ERM") {
    const Dataset d = data(800, 13);
    const ModelParams init = ModelParams::logistic(d.dim(), 2);
    TrainConfig c = config(SolverKind::group_dro, 0.0, 0.0, 0.5, 300);
    c.group_step = 0.5;
    const TrainResult g = train(d, init, c);
    const ModelParams erm = reference_erm(d, init, 0.5, 300);
    const double worst_g = group_losses(per_sample_loss(g.params, d), d).maxCoeff();
    const double worst_e = group_losses(per_sample_loss(erm, d), d).maxCoeff();
    CHECK(worst_g <= worst_e + 1e-9);
    CHECK(g.group_weights.sum() == doctest::Approx(1.0));
}

TEST_CASE("lambda = 0 reduces every solver to its loss-only form") {
    const Dataset d = data(300, 14);
    const ModelParams init = ModelParams::logistic(d.dim(), 2);
    const ModelParams ref = reference_erm(d, init, 0.2, 50);
    for (SolverKind k : {SolverKind::det_l1, SolverKind::det_l2, SolverKind::det_linf}) {
        const TrainResult r = train(d, init, config(k, 0.0, 0.5, 0.2, 50));
        CHECK(r.params.flat() == ref.flat());
    }
    TrainConfig s = config(SolverKind::sgda_l2, 0.0, 0.5, 0.2, 50);
    s.batch_size = d.size();
    CHECK((train(d, init, s).params.flat() - ref.flat()).norm() < 1e-12);
}

TEST_CASE("eps = 0 makes the robust solvers agree with FERMI") {
    const Dataset d = data(300, 15);
    const ModelParams init = ModelParams::mlp1(d.dim(), 2, 3, 2);
    const TrainResult l1 = train(d, init, config(SolverKind::det_l1, 3.0, 0.0, 0.1, 30));
    const TrainResult l2 = train(d, init, config(SolverKind::det_l2, 3.0, 0.0, 0.1, 30));
    const TrainResult li = train(d, init, config(SolverKind::det_linf, 3.0, 0.0, 0.1, 30));
    ModelParams p = init;
    for (long t = 0; t < 30; ++t) p.axpy(-0.1, Eigen::VectorXd(loss_and_grad(p, d).grad + 3.0 * ermi_grad(p, d)));
    CHECK(l1.params.flat() == p.flat());
    CHECK(l2.params.flat() == p.flat());
    CHECK(li.params.flat() == p.flat());
}

TEST_CASE("solvers are deterministic for a fixed seed") {
    const Dataset d = data(300, 16);
    TrainConfig s = config(SolverKind::sgda_l2, 1.0, 0.2, 0.05, 30);
    s.batch_size = 20;
    s.seed = 42;
    const ModelParams init = ModelParams::logistic(d.dim(), 2);
    CHECK(train(d, init, s).params.flat() == train(d, init, s).params.flat());
    s.seed = 43;
    TrainConfig s2 = s;
    s2.seed = 42;
    CHECK(train(d, init, s).params.flat() != train(d, init, s2).params.flat());
}
