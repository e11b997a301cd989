#include "drfermi/synthetic.hpp"

#include "drfermi/errors.hpp"
#include "drfermi/rng.hpp"

namespace drfermi {

Dataset make_adult_like(const SyntheticSpec& spec) {
    if (spec.n < 2) throw ConfigError("synthetic n must be >= 2");
    if (spec.dim < 2) throw ConfigError("synthetic dim must be >= 2");
    const double pm = spec.p_minority;
    const double py = spec.p_positive;
    const double pmy = spec.p_minority_given_pos * py;  // P(s = minority, y = 1)
    if (!(pm > 0.0 && pm < 1.0 && py > 0.0 && py < 1.0) || pmy >= pm || py - pmy >= 1.0 - pm)
        throw ConfigError("synthetic probabilities do not form a valid joint");
    // cell probabilities, s-major: (s=0,y=0), (s=0,y=1), (s=1,y=0), (s=1,y=1)
    const double cells[4] = {1.0 - pm - (py - pmy), py - pmy, pm - pmy, pmy};

    CounterRng rng(spec.seed, 0x5359);
    Eigen::MatrixXd load(spec.dim, 2);
    load.row(0) << 1.0, 0.0;
    load.row(1) << 0.0, 1.0;
    for (long j = 2; j < spec.dim; ++j) load.row(j) << rng.uniform(-0.5, 1.0), rng.uniform(-0.5, 1.0);

    Eigen::MatrixXd x(spec.n, spec.dim);
    Eigen::VectorXi y(spec.n);
    Eigen::VectorXi s(spec.n);
    for (long i = 0; i < spec.n; ++i) {
        // the first two rows are pinned so both sensitive levels always appear
        int cell = i == 0 ? 0 : (i == 1 ? 2 : 3);
        if (i >= 2) {
            double u = rng.uniform();
            cell = 0;
            while (cell < 3 && u >= cells[cell]) u -= cells[cell++];
        }
        s(i) = cell / 2;
        y(i) = cell % 2;
        const double ys = 2.0 * y(i) - 1.0;
        const double ss = 2.0 * s(i) - 1.0;
        for (long j = 0; j < spec.dim; ++j)
            x(i, j) = 0.5 * (spec.label_signal * load(j, 0) * ys + spec.sensitive_signal * load(j, 1) * ss) +
                      spec.noise * rng.normal();
    }

    Encoding enc;
    enc.label_name = "income";
    enc.sensitive_name = "sex";
    enc.label_levels = {"<=50K", ">50K"};
    enc.sensitive_levels = {"Man", "Woman"};
    for (long j = 0; j < spec.dim; ++j) enc.features.push_back({"x" + std::to_string(j), std::nullopt, true});
    return Dataset(std::move(x), std::move(y), std::move(s), 2, 2, std::move(enc));
}

}  // namespace drfermi
