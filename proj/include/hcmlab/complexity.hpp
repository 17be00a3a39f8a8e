#pragma once

#include "hcmlab/network.hpp"

#include <cstdint>
#include <vector>

namespace hcmlab::complexity {

// Sup-norm cover of F(L, r, alpha) over [-a,a]^d at radius epsilon, built by
// discretizing the coefficients layer by layer. The per-layer tolerances come
// from the perturbation chain: each of the L+1 stages may contribute at most
// epsilon/(L+1).
struct CoverSpec {
    double epsilon = 0.1;
    net::NetworkClass cls;
    double a = 1.0;
    int d = 1;
    double sigma_lipschitz = 0.25;  // sup of the sigmoid derivative
};

// Coefficient tolerance at stage t (t = L is the output stage, t = 0 the
// input stage); grid spacing is twice the tolerance.
std::vector<double> layer_tolerances(const CoverSpec& spec);

// Natural log of c28 * ((L+1) (alpha C (r+1))^L (d+1) a / eps)^((L+1)(r+1)^2),
// evaluated in log space.
double covering_bound_log(const CoverSpec& spec, double c28 = 1.0);

// Exact number of grid networks the explicit cover enumerates.
double cover_cardinality(const CoverSpec& spec);

// Enumerates the grid networks. Grids are anchored at zero with symmetric
// steps, so the zero network is always an element. Refuses when the
// cardinality exceeds `budget` (the message carries the required count).
std::vector<net::Network> build_cover(const CoverSpec& spec, long budget = 200000);

// Snaps each coefficient to its stage grid; the result is a cover element
// within epsilon of `f` in sup norm on [-a,a]^d.
net::Network snap_to_cover(const CoverSpec& spec, const net::Network& f);

struct CoverCheck {
    long members = 0;
    long within = 0;
    double pass_rate = 0.0;
    double worst_distance = 0.0;
};

// Draws random members of the class, snaps them, and measures the sup
// distance on an evaluation grid of `grid_points` per axis sample set.
CoverCheck verify_cover_by_sampling(const CoverSpec& spec, long members, long grid_points,
                                    std::uint64_t seed);

// c18 (ln n)^2 (log_cover + 1)/n + 2 approx_err_sq
double generalization_bound(long n, double log_cover, double approx_err_sq, double c18 = 1.0);

struct ExponentAssembly {
    double width_exponent = 0.0;       // growth of r_n
    double estimation_exponent = 0.0;  // entropy term stripped of log factors
    double approximation_exponent = 0.0;
    double total_exponent = 0.0;
    double predicted_exponent = 0.0;   // -2 pbar / (2 pbar + Kbar)
    double dominant_p = 0.0;
    int dominant_k = 0;
};

// Combines the covering bound shape (log cover ~ (r+1)^2 times log factors at
// eps = 1/(n c4 ln n)), the width schedule, and the squared approximation
// target M^(-2p) per node into the n-exponent of the total risk bound.
ExponentAssembly rate_exponent_assembly(const std::vector<std::pair<double, int>>& pk_pairs);

}  // namespace hcmlab::complexity
