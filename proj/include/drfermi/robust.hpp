#pragma once

// Worst case of Tr(Q^T Q) over an Lp ball of radius eps around the singular
// values of Q, in closed form, plus a search-based oracle for the same maximum.

#include "drfermi/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

namespace drfermi {

enum class BallNorm { L1, L2, Linf };

std::string to_string(BallNorm norm);
BallNorm ball_norm_from_string(const std::string& name);

/// Uncertainty ball on the singular-value vector. For L1 the top singular
/// value is pinned at one and only sigma_2.. carry the budget.
struct RobustSpec {
    BallNorm norm = BallNorm::L2;
    double epsilon = 0.0;
};

/// L1:   Tr(Q^T Q) + 2 eps sigma_2 + eps^2
/// L2:   Tr(Q^T Q) + 2 eps sqrt(Tr(Q^T Q)) + eps^2
/// Linf: Tr(Q^T Q) + 2 eps sum_i sigma_i + r eps^2, r = number of singular values
template <typename Scalar>
Scalar robust_value(const QMatrix<Scalar>& qm, const RobustSpec& spec) {
    const Scalar tr = ermi(qm);
    const auto eps = static_cast<Scalar>(spec.epsilon);
    switch (spec.norm) {
        case BallNorm::L1:
            return tr + Scalar(2) * eps * hgr(qm) + eps * eps;
        case BallNorm::L2:
            return tr + Scalar(2) * eps * std::sqrt(tr) + eps * eps;
        case BallNorm::Linf:
            return tr + Scalar(2) * eps * nuclear_norm(qm) +
                   static_cast<Scalar>(qm.sigma.size()) * eps * eps;
    }
    return tr;
}

template <typename Scalar>
struct BallMax {
    Scalar value;
    Vec<Scalar> point;  // maximizing singular-value vector
};

inline constexpr long kOracleMaxRank = 6;

/// Maximizes sum_i a_i^2 over {a >= 0 : ||a - sigma||_p <= eps} by search, with
/// no use of the closed forms:
///   L1 (a_1 = sigma_1 pinned) and Linf: enumeration of the polytope vertices
///   plus a grid at `resolution` over the edges / box;
///   L2: coarse-to-fine angular grid on the sphere of radius eps, refined
///   until the angular step is below `resolution`.
template <typename Scalar>
BallMax<Scalar> brute_force_ball_max(const Vec<Scalar>& sigma, const RobustSpec& spec,
                                     double resolution = 1e-3) {
    const long r = sigma.size();
    if (r > kOracleMaxRank)
        throw DomainError("oracle supports at most " + std::to_string(kOracleMaxRank) +
                          " singular values, got " + std::to_string(r));
    if (!(resolution > 0.0)) throw DomainError("oracle resolution must be positive");
    const auto eps = static_cast<Scalar>(spec.epsilon);

    BallMax<Scalar> best{sigma.squaredNorm(), sigma};
    const auto consider = [&](Vec<Scalar> a) {
        a = a.cwiseMax(Scalar(0));
        const Scalar val = a.squaredNorm();
        if (val > best.value) best = {val, std::move(a)};
    };
    if (eps == Scalar(0) || r == 0) return best;

    switch (spec.norm) {
        case BallNorm::L1: {
            const long steps = std::max<long>(1, std::lround(1.0 / resolution));
            for (long i = 1; i < r; ++i) {
                for (int si : {-1, 1}) {
                    Vec<Scalar> a = sigma;
                    a(i) += Scalar(si) * eps;
                    consider(std::move(a));
                    // edges between vertex (i, si) and every vertex (j, sj)
                    for (long j = i + 1; j < r; ++j) {
                        for (int sj : {-1, 1}) {
                            for (long t = 1; t < steps; ++t) {
                                const Scalar frac = Scalar(t) / Scalar(steps);
                                Vec<Scalar> b = sigma;
                                b(i) += Scalar(si) * eps * frac;
                                b(j) += Scalar(sj) * eps * (Scalar(1) - frac);
                                consider(std::move(b));
                            }
                        }
                    }
                }
            }
            break;
        }
        case BallNorm::Linf: {
            const long per_dim = r <= 3 ? 41 : (r <= 4 ? 21 : 5);
            std::vector<long> idx(static_cast<std::size_t>(r), 0);
            while (true) {
                Vec<Scalar> a = sigma;
                for (long d = 0; d < r; ++d)
                    a(d) += eps * (Scalar(-1) + Scalar(2) * Scalar(idx[static_cast<std::size_t>(d)]) /
                                                    Scalar(per_dim - 1));
                consider(std::move(a));
                long d = 0;
                while (d < r && ++idx[static_cast<std::size_t>(d)] == per_dim) {
                    idx[static_cast<std::size_t>(d)] = 0;
                    ++d;
                }
                if (d == r) break;
            }
            break;
        }
        case BallNorm::L2: {
            if (r == 1) {
                consider(Vec<Scalar>::Constant(1, sigma(0) + eps));
                consider(Vec<Scalar>::Constant(1, sigma(0) - eps));
                break;
            }
            const long dims = r - 1;
            // hyperspherical coordinates with the pole on the last (smallest)
            // singular value, so the search near sigma_1 stays well conditioned
            const auto direction = [&](const std::vector<Scalar>& phi) {
                Vec<Scalar> u(r);
                Scalar prod(1);
                for (long d = 0; d < dims; ++d) {
                    u(r - 1 - d) = prod * std::cos(phi[static_cast<std::size_t>(d)]);
                    prod *= std::sin(phi[static_cast<std::size_t>(d)]);
                }
                u(0) = prod;
                return u;
            };
            const long grid = 9;
            std::vector<Scalar> centre(static_cast<std::size_t>(dims), Scalar(std::numbers::pi));
            Scalar half(std::numbers::pi);
            Scalar best_val = -1;
            std::vector<Scalar> best_phi = centre;
            while (true) {
                std::vector<long> idx(static_cast<std::size_t>(dims), 0);
                while (true) {
                    std::vector<Scalar> phi(static_cast<std::size_t>(dims));
                    for (long d = 0; d < dims; ++d)
                        phi[static_cast<std::size_t>(d)] =
                            centre[static_cast<std::size_t>(d)] - half +
                            Scalar(2) * half * Scalar(idx[static_cast<std::size_t>(d)]) / Scalar(grid - 1);
                    const Vec<Scalar> a = (sigma + eps * direction(phi)).cwiseMax(Scalar(0));
                    const Scalar val = a.squaredNorm();
                    if (val > best_val) {
                        best_val = val;
                        best_phi = phi;
                    }
                    long d = 0;
                    while (d < dims && ++idx[static_cast<std::size_t>(d)] == grid) {
                        idx[static_cast<std::size_t>(d)] = 0;
                        ++d;
                    }
                    if (d == dims) break;
                }
                const Scalar step = Scalar(2) * half / Scalar(grid - 1);
                if (step < Scalar(resolution) * Scalar(0.01)) break;
                centre = best_phi;
                half = Scalar(2) * step;
            }
            consider(sigma + eps * direction(best_phi));
            break;
        }
    }
    return best;
}

template <typename Scalar>
BallMax<Scalar> brute_force_ball_max(const QMatrix<Scalar>& qm, const RobustSpec& spec,
                                     double resolution = 1e-3) {
    return brute_force_ball_max<Scalar>(qm.sigma, spec, resolution);
}

enum class DegeneratePolicy {
    raise,            ///< NondifferentiableError when sigma_2 = 0 on the L1 path
    zero_subgradient  ///< take the zero subgradient of ||Q v|| at Q v = 0
};

/// Gradient of robust_value(build_q(estimate_probs(forward(theta)))) with the
/// singular vectors frozen at the current SVD. eps^2 terms contribute nothing.
///   L1:   ermi_grad + 2 eps d||Q v_2||
///   L2:   ermi_grad (1 + eps / sqrt(Tr(Q^T Q)))
///   Linf: ermi_grad + 2 eps sum_i u_i^T dQ v_i
Eigen::VectorXd robust_grad(const ModelParams& params, const Dataset& data,
                            const FairnessState& st, const RobustSpec& spec,
                            DegeneratePolicy policy = DegeneratePolicy::raise);
Eigen::VectorXd robust_grad(const ModelParams& params, const Dataset& data, const RobustSpec& spec);

}  // namespace drfermi
