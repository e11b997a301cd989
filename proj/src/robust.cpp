#include "drfermi/robust.hpp"

namespace drfermi {

std::string to_string(BallNorm norm) {
    switch (norm) {
        case BallNorm::L1: return "l1";
        case BallNorm::L2: return "l2";
        case BallNorm::Linf: return "linf";
    }
    return "?";
}

BallNorm ball_norm_from_string(const std::string& name) {
    if (name == "l1" || name == "L1") return BallNorm::L1;
    if (name == "l2" || name == "L2") return BallNorm::L2;
    if (name == "linf" || name == "Linf" || name == "inf") return BallNorm::Linf;
    throw ConfigError("unknown ball norm '" + name + "' (expected l1, l2 or linf)");
}

Eigen::VectorXd robust_grad(const ModelParams& params, const Dataset& data,
                            const FairnessState& st, const RobustSpec& spec,
                            DegeneratePolicy policy) {
    if (spec.epsilon < 0.0) throw ConfigError("ball radius must be non-negative");
    Eigen::VectorXd g = ermi_grad(params, data, st);
    if (spec.epsilon == 0.0) return g;
    switch (spec.norm) {
        case BallNorm::L1: {
            if (st.q.sigma.size() < 2 || st.q.sigma(1) <= 1e-12) {
                if (policy == DegeneratePolicy::zero_subgradient) return g;
                throw NondifferentiableError("sigma_2(Q) = 0: the L1 robust term is not differentiable");
            }
            g += 2.0 * spec.epsilon * sigma2_grad(params, data, st, st.q.v.col(1)).grad;
            return g;
        }
        case BallNorm::L2:
            return g * (1.0 + spec.epsilon / std::sqrt(ermi(st.q)));
        case BallNorm::Linf:
            g += 2.0 * spec.epsilon * nuclear_grad(params, data, st).grad;
            return g;
    }
    return g;
}

Eigen::VectorXd robust_grad(const ModelParams& params, const Dataset& data, const RobustSpec& spec) {
    return robust_grad(params, data, fairness_state(params, data), spec);
}

}  // namespace drfermi
