#include "hcmlab/complexity.hpp"

#include "hcmlab/approx.hpp"
#include "hcmlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hcmlab::complexity {

namespace {

struct GridInfo {
    std::vector<double> spacing;     // per stage
    std::vector<long> half_points;   // grid = {k * spacing : |k| <= half_points}
    std::vector<long> coeff_count;   // coefficients per stage
};

GridInfo grid_info(const CoverSpec& spec) {
    const auto tol = layer_tolerances(spec);
    const int L = spec.cls.depth;
    const int r = spec.cls.width;
    GridInfo g;
    for (int t = 0; t <= L; ++t) {
        const double delta = 2.0 * tol[t];
        // smallest m with m*delta + delta/2 >= alpha, so snapping stays within tol
        const double need = (spec.cls.alpha - delta / 2.0) / delta;
        g.spacing.push_back(delta);
        g.half_points.push_back(need <= 0.0 ? 0 : static_cast<long>(std::ceil(need - 1e-12)));
        long count;
        if (t == 0)
            count = long(r) * (spec.d + 1);
        else if (t == L)
            count = r + 1;  // one output row
        else
            count = long(r) * (r + 1);
        g.coeff_count.push_back(count);
    }
    return g;
}

}  // namespace

std::vector<double> layer_tolerances(const CoverSpec& spec) {
    if (spec.epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    const int L = spec.cls.depth;
    const double r = spec.cls.width;
    const double amp = spec.cls.alpha * spec.sigma_lipschitz * (r + 1.0);
    std::vector<double> tol(L + 1);
    tol[L] = spec.epsilon / ((L + 1.0) * (r + 1.0));
    for (int t = 1; t < L; ++t)
        tol[t] = spec.epsilon / ((L + 1.0) * r * std::pow(amp, double(L - t)));
    tol[0] = spec.epsilon / ((L + 1.0) * r * std::pow(amp, double(L - 1)) *
                             spec.sigma_lipschitz * (spec.d + 1.0) * spec.a);
    return tol;
}

double covering_bound_log(const CoverSpec& spec, double c28) {
    if (spec.epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    const double L = spec.cls.depth;
    const double r = spec.cls.width;
    const double inner = std::log(L + 1.0) +
                         L * std::log(spec.cls.alpha * spec.sigma_lipschitz * (r + 1.0)) +
                         std::log(spec.d + 1.0) + std::log(spec.a) - std::log(spec.epsilon);
    return std::log(c28) + (L + 1.0) * (r + 1.0) * (r + 1.0) * inner;
}

double cover_cardinality(const CoverSpec& spec) {
    const auto g = grid_info(spec);
    double total = 1.0;
    for (std::size_t t = 0; t < g.spacing.size(); ++t)
        total *= std::pow(double(2 * g.half_points[t] + 1), double(g.coeff_count[t]));
    return total;
}

std::vector<net::Network> build_cover(const CoverSpec& spec, long budget) {
    const auto g = grid_info(spec);
    const double total = cover_cardinality(spec);
    if (total > double(budget)) {
        std::ostringstream os;
        os << "cover enumeration needs " << total << " networks, budget is " << budget;
        throw std::runtime_error(os.str());
    }

    const int L = spec.cls.depth;
    const int r = spec.cls.width;
    // flattened coefficient slots: stage by stage, rows x (bias + inputs)
    struct Slot {
        int stage;
        int row;
        int col;  // -1 = bias
    };
    std::vector<Slot> slots;
    for (int t = 0; t <= L; ++t) {
        const int rows = (t == L) ? 1 : r;
        const int cols = (t == 0) ? spec.d : r;
        for (int i = 0; i < rows; ++i) {
            slots.push_back({t, i, -1});
            for (int c = 0; c < cols; ++c) slots.push_back({t, i, c});
        }
    }

    std::vector<long> digit(slots.size(), 0);  // in [0, 2m], value = (digit - m) * spacing
    std::vector<net::Network> cover;
    cover.reserve(static_cast<std::size_t>(total));
    while (true) {
        net::Network n;
        n.input_dim = spec.d;
        int in = spec.d;
        for (int t = 0; t <= L; ++t) {
            const int rows = (t == L) ? 1 : r;
            net::Layer l;
            l.w = Eigen::MatrixXd::Zero(rows, in);
            l.b = Eigen::VectorXd::Zero(rows);
            n.layers.push_back(std::move(l));
            in = rows;
        }
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const auto& sl = slots[s];
            const double v = double(digit[s] - g.half_points[sl.stage]) * g.spacing[sl.stage];
            if (sl.col < 0)
                n.layers[sl.stage].b[sl.row] = v;
            else
                n.layers[sl.stage].w(sl.row, sl.col) = v;
        }
        cover.push_back(std::move(n));

        // odometer increment
        std::size_t pos = 0;
        while (pos < slots.size()) {
            if (digit[pos] < 2 * g.half_points[slots[pos].stage]) {
                ++digit[pos];
                break;
            }
            digit[pos] = 0;
            ++pos;
        }
        if (pos == slots.size()) break;
    }
    return cover;
}

net::Network snap_to_cover(const CoverSpec& spec, const net::Network& f) {
    const auto g = grid_info(spec);
    net::Network out = f;
    for (std::size_t t = 0; t < out.layers.size(); ++t) {
        auto snap = [&](double v) {
            const double delta = g.spacing[t];
            long k = static_cast<long>(std::llround(v / delta));
            k = std::clamp(k, -g.half_points[t], g.half_points[t]);
            return double(k) * delta;
        };
        auto& l = out.layers[t];
        for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
            l.b[i] = snap(l.b[i]);
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(i, c) = snap(l.w(i, c));
        }
    }
    return out;
}

CoverCheck verify_cover_by_sampling(const CoverSpec& spec, long members, long grid_points,
                                    std::uint64_t seed) {
    Rng rng(seed);
    CoverCheck check;
    check.members = members;
    for (long m = 0; m < members; ++m) {
        net::Network f;
        f.input_dim = spec.d;
        int in = spec.d;
        for (int t = 0; t <= spec.cls.depth; ++t) {
            const int rows = (t == spec.cls.depth) ? 1 : spec.cls.width;
            net::Layer l;
            l.w = Eigen::MatrixXd::Zero(rows, in);
            l.b = Eigen::VectorXd::Zero(rows);
            for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
                l.b[i] = rng.uniform(-spec.cls.alpha, spec.cls.alpha);
                for (Eigen::Index c = 0; c < l.w.cols(); ++c)
                    l.w(i, c) = rng.uniform(-spec.cls.alpha, spec.cls.alpha);
            }
            f.layers.push_back(std::move(l));
            in = rows;
        }
        const net::Network snapped = snap_to_cover(spec, f);
        const double dist = approx::sup_abs_error(
            [&](std::span<const double> x) { return f.forward(x); },
            [&](std::span<const double> x) { return snapped.forward(x); }, spec.d, spec.a,
            grid_points, mix64(seed, static_cast<std::uint64_t>(m)));
        check.worst_distance = std::max(check.worst_distance, dist);
        if (dist < spec.epsilon) ++check.within;
    }
    check.pass_rate = members > 0 ? double(check.within) / double(members) : 1.0;
    return check;
}

double generalization_bound(long n, double log_cover, double approx_err_sq, double c18) {
    if (n < 2) throw std::invalid_argument("n must be >= 2");
    if (log_cover < 0.0 || approx_err_sq < 0.0 || c18 < 0.0)
        throw std::invalid_argument("inputs must be nonnegative");
    const double ln_n = std::log(double(n));
    return c18 * ln_n * ln_n * (log_cover + 1.0) / double(n) + 2.0 * approx_err_sq;
}

ExponentAssembly rate_exponent_assembly(const std::vector<std::pair<double, int>>& pk_pairs) {
    ExponentAssembly out;
    out.width_exponent = approx::width_growth_exponent(pk_pairs);
    // log cover at eps = 1/(n c4 ln n) is (L+1)(r_n+1)^2 times a polylog
    // factor (alpha_n = n^c3 and 1/eps only contribute ln n terms), so the
    // estimation term c18 (ln n)^2 (log cover + 1)/n carries exponent
    // 2 * width_exponent - 1 once logs are stripped.
    out.estimation_exponent = 2.0 * out.width_exponent - 1.0;
    double approx_sq = -std::numeric_limits<double>::infinity();
    for (auto [p, k] : pk_pairs) {
        // squared node target (M^(-2p))^2 with M = n^(1/(2(2p+K)))
        approx_sq = std::max(approx_sq, -4.0 * p / (2.0 * (2.0 * p + k)));
    }
    out.approximation_exponent = approx_sq;
    out.total_exponent = std::max(out.estimation_exponent, out.approximation_exponent);
    const auto [pb, kb] = approx::dominant_pair(pk_pairs);
    out.dominant_p = pb;
    out.dominant_k = kb;
    out.predicted_exponent = -2.0 * pb / (2.0 * pb + kb);
    return out;
}

}  // namespace hcmlab::complexity
