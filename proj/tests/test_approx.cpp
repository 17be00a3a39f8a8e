#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hcmlab/approx.hpp"
#include "hcmlab/rng.hpp"
#include "oracles.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

using namespace hcmlab;
using approx::ScheduleConstants;
using hcm::HcmNode;
using hcm::HcmSpec;
using hcm::make_node_function;

namespace {

HcmNode leaf(const std::string& kind, std::vector<double> params, std::vector<int> coords,
             double cube = 2.0) {
    HcmNode n;
    n.g = make_node_function(kind, std::move(params), static_cast<int>(coords.size()), cube);
    n.coords = std::move(coords);
    n.level = 1;
    return n;
}

HcmNode inner(const std::string& kind, std::vector<double> params, std::vector<HcmNode> children,
              double cube = 2.0) {
    HcmNode n;
    n.g = make_node_function(kind, std::move(params), static_cast<int>(children.size()), cube);
    n.level = children.front().level + 1;
    n.children = std::move(children);
    return n;
}

// scaled three-node catalog shape: every node sup-bounded by 1 on the
// metadata cube, so the perturbed-range condition is airtight
HcmSpec fig3_catalog() {
    const double w = 1.0 / 6.0;
    HcmSpec spec;
    spec.d = 6;
    spec.level = 2;
    spec.cube_radius = 2.0;
    spec.root = inner("affine", {w, w, w, 0},
                      {leaf("polynomial", {2, 0, 0, 0.25}, {1}),
                       leaf("polynomial", {2, 0, 0, 0, 0, 0.25, 0}, {2, 3}),
                       leaf("affine", {w, w, w, 0}, {4, 5, 6})});
    return spec;
}

HcmSpec single_product_node() {  // (p,K) = (2,2)
    HcmSpec spec;
    spec.d = 2;
    spec.level = 1;
    spec.root = leaf("product", {}, {1, 2});
    return spec;
}

HcmSpec single_square_node(int d) {  // (p,K) = (2,1)
    HcmSpec spec;
    spec.d = d;
    spec.level = 1;
    spec.root = leaf("polynomial", {2, 0, 0, 1}, {1});
    return spec;
}

}  // namespace

TEST_CASE("schedule depth follows the level count and the log term") {
    // two levels, K_max = 3, p_max = 2: per-node depth 8 + ceil(log2 3) = 10
    const auto s = approx::schedule(1000, fig3_catalog(), {});
    CHECK(s.depth == 20);
}

TEST_CASE("schedule width reproduces the hand arithmetic") {
    const auto s = approx::schedule(1000000, single_product_node(), {2.0, 1.0, 1.0});
    // 2^2 * 1 * 29 * C(4,2) * 4 * 2 * 10^(6/6) = 55680
    CHECK(s.width == 55680);
    CHECK(s.width_raw == doctest::Approx(55680.0).epsilon(1e-9));
    CHECK(s.alpha == doctest::Approx(1e12));
    CHECK(s.beta == doctest::Approx(std::log(1e6)));
}

TEST_CASE("resolutions snap exact powers") {
    CHECK(approx::resolution_for(4096, 2.0, 2) == 2);  // 4096^(1/12) is exactly 2
    CHECK(approx::resolution_for(4097, 2.0, 2) == 3);
    CHECK(approx::resolution_for(2048, 2.0, 2) == 2);
    CHECK(approx::resolution_for(2, 2.0, 2) == 2);
}

TEST_CASE("dominating pair is invariant under doubling n") {
    const std::vector<HcmSpec> specs{single_product_node(), single_square_node(4), fig3_catalog()};
    for (const auto& spec : specs) {
        for (long n : {1000L, 5000L, 250000L}) {
            const auto a = approx::schedule(n, spec, {});
            const auto b = approx::schedule(2 * n, spec, {});
            CHECK(a.dominant_p == b.dominant_p);
            CHECK(a.dominant_k == b.dominant_k);
            CHECK(a.predicted_exponent == b.predicted_exponent);
        }
    }
}

TEST_CASE("schedule width grows with the advertised exponent") {
    for (const auto& spec : {single_product_node(), single_square_node(4)}) {
        const auto lo = approx::schedule(1000, spec, {});
        const auto hi = approx::schedule(1000000000L, spec, {});
        const double slope = (std::log(double(hi.width)) - std::log(double(lo.width))) /
                             (std::log(1e9) - std::log(1e3));
        CHECK(std::abs(slope - lo.width_exponent) <= 5e-2);
    }
}

TEST_CASE("width scale shrinks the prefactor, not the exponent") {
    const auto full = approx::schedule(100000, single_square_node(4), {2.0, 1.0, 1.0});
    const auto tenth = approx::schedule(100000, single_square_node(4), {2.0, 1.0, 0.1});
    CHECK(double(tenth.width) == doctest::Approx(0.1 * double(full.width)).epsilon(0.05));
    CHECK(tenth.width_exponent == full.width_exponent);
}

TEST_CASE("plan width arithmetic") {
    SUBCASE("single node, K=1, q=1, M=2") {
        auto spec = single_square_node(1);
        std::vector<approx::NodeResolution> res{{hcm::NodeId{1, 1}, 2.0, 1, 1, 2}};
        const auto p = approx::plan(spec, res, 1.0);
        REQUIRE(p.nodes.size() == 1);
        CHECK(p.nodes[0].width == 232);  // 29 * C(2,1) * 1 * 2 * 2
        CHECK(p.width == 232);
    }
    SUBCASE("three-node shape with every resolution 1") {
        const auto spec = fig3_catalog();
        std::vector<approx::NodeResolution> res;
        for (const auto& [id, node] : hcm::all_nodes(spec))
            res.push_back({id, node->g.smoothness.p, node->g.smoothness.q, node->g.arity, 1});
        const auto p = approx::plan(spec, res, 1.0);
        // hand sums: level 1 = 116 + 696 + 261, level 2 = 261
        long level1 = 0;
        long level2 = 0;
        for (const auto& np : p.nodes)
            (np.id.level == 1 ? level1 : level2) += np.width;
        CHECK(level1 == 116 + 696 + 261);
        CHECK(level2 == 261);
        CHECK(p.width == std::max(level1, level2));
        CHECK(p.depth_per_node == 10);
        CHECK(p.depth == 20);
        // resolution 1 leaves exactly the combinatorial prefactor
        for (const auto& np : p.nodes) {
            const double prefactor = np.width;
            CHECK(std::pow(1.0, np.arity) * prefactor == doctest::Approx(np.width));
        }
    }
    SUBCASE("plan alpha saturates instead of overflowing") {
        const auto p = approx::plan_for_n(fig3_catalog(), 4096, 2.0);
        CHECK(std::isfinite(p.log_alpha0));
        CHECK(p.alpha0 > 0.0);
        CHECK(p.alpha_total >= p.alpha0);
    }
}

TEST_CASE("subnetwork fitting: zero target, identity warm start, product report") {
    SUBCASE("constant zero is reproduced exactly by the zero candidate") {
        const auto g = make_node_function("affine", {0.0, 0.0}, 1, 2.0);
        estimator::TrainConfig budget;
        budget.epochs = 20;
        budget.seed = 5;
        const auto fit = approx::fit_subnetwork(g, {1, 2, 4.0}, 1.0, budget);
        CHECK(fit.measured_sup_error == 0.0);
    }
    SUBCASE("identity with an identity-block warm start beats the curvature bound") {
        const double R = 50.0;
        const auto g = make_node_function("affine", {1.0, 0.0}, 1, 2.0);
        estimator::TrainConfig budget;
        budget.epochs = 50;
        budget.learning_rate = 0.01;
        budget.seed = 6;
        const auto fit =
            approx::fit_subnetwork(g, {1, 1, 4.0 * R}, 1.0, budget, net::identity_block(R));
        CHECK(fit.measured_sup_error <= 2.0 * net::kSigmoidSecondDerivSup / R);
    }
    SUBCASE("bivariate product training reports a finite achieved error") {
        const auto g = make_node_function("product", {}, 2, 2.0);
        estimator::TrainConfig budget;
        budget.epochs = 2000;
        budget.learning_rate = 0.2;
        budget.seed = 7;
        const auto fit = approx::fit_subnetwork(g, {2, 12, 1e6}, 1.0, budget);
        CHECK(std::isfinite(fit.measured_sup_error));
        CHECK(fit.measured_sup_error < 0.5);  // the zero candidate already achieves 1
    }
}

TEST_CASE("assembly: single node equals its subnetwork") {
    const auto spec = single_square_node(2);
    const auto plan = approx::plan_for_n(spec, 100, 2.0, 0.02);
    estimator::TrainConfig budget;
    budget.epochs = 60;
    budget.seed = 8;
    const auto fits = approx::fit_all_subnetworks(spec, plan, 1.0, budget, 99);
    const auto assembled = approx::assemble(spec, plan, fits);
    Rng rng(12);
    std::vector<double> x(2);
    for (int t = 0; t < 100; ++t) {
        for (auto& c : x) c = rng.uniform(-1, 1);
        const std::vector<double> first{x[0]};
        const double want = fits[0].fit.network.forward(first);
        CHECK(assembled.forward(x) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("assembly matches nested evaluation and the planned class") {
    const auto spec = fig3_catalog();
    const auto plan = approx::plan_for_n(spec, 256, 2.0, 0.01);
    estimator::TrainConfig budget;
    budget.epochs = 40;
    budget.learning_rate = 0.2;
    budget.seed = 123;
    const auto fits = approx::fit_all_subnetworks(spec, plan, 1.0, budget, 2024, 2);
    const auto assembled = approx::assemble(spec, plan, fits);

    CHECK(assembled.depth() == plan.depth);
    const auto cls_check =
        net::in_class(assembled, {plan.depth, static_cast<int>(plan.width), plan.alpha_total});
    CHECK(cls_check.ok);

    auto subnet = [&](int level, int j) -> const net::Network& {
        for (const auto& f : fits)
            if (f.id.level == level && f.id.j == j) return f.fit.network;
        throw std::logic_error("missing");
    };
    Rng rng(55);
    std::vector<double> x(6);
    for (int t = 0; t < 200; ++t) {
        for (auto& c : x) c = rng.uniform(-1, 1);
        const std::vector<double> h1{x[0]};
        const std::vector<double> h2{x[1], x[2]};
        const std::vector<double> h3{x[3], x[4], x[5]};
        const std::vector<double> mids{subnet(1, 1).forward(h1), subnet(1, 2).forward(h2),
                                       subnet(1, 3).forward(h3)};
        const double want = subnet(2, 1).forward(mids);
        const double got = assembled.forward(x);
        CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("assembly rejects shape drift") {
    const auto spec = single_square_node(2);
    const auto plan = approx::plan_for_n(spec, 100, 2.0, 0.02);
    estimator::TrainConfig budget;
    budget.epochs = 10;
    budget.seed = 1;
    auto fits = approx::fit_all_subnetworks(spec, plan, 1.0, budget, 3);
    fits[0].fit.network = net::identity_block(2.0);  // wrong depth/width
    CHECK_THROWS_AS(approx::assemble(spec, plan, fits), std::invalid_argument);
}

TEST_CASE("error propagation recurrence") {
    SUBCASE("single level returns the node error") {
        const auto spec = single_square_node(2);
        const auto report =
            approx::error_propagation_bound(spec, {{hcm::NodeId{1, 1}, 0.25}}, 1.0);
        CHECK(report.root_bound == doctest::Approx(0.25));
    }
    SUBCASE("one step of the recurrence by hand") {
        // two levels, root arity 2, every Lipschitz bound exactly 1
        HcmSpec spec;
        spec.d = 2;
        spec.level = 2;
        spec.cube_radius = 2.0;
        spec.root = inner("affine", {0.25, 0.25, 0},
                          {leaf("affine", {0.5, 0}, {1}), leaf("affine", {0.5, 0}, {2})});
        const double eps = 0.1;
        const auto report = approx::error_propagation_bound(
            spec,
            {{hcm::NodeId{1, 1}, eps}, {hcm::NodeId{1, 2}, eps}, {hcm::NodeId{2, 1}, eps}}, 1.0);
        CHECK(report.root_bound == doctest::Approx(3.0 * eps).epsilon(1e-12));
        CHECK(report.range_issues.empty());
    }
    SUBCASE("zero errors propagate to a zero bound") {
        const auto spec = fig3_catalog();
        std::vector<std::pair<hcm::NodeId, double>> zeros;
        for (const auto& [id, node] : hcm::all_nodes(spec)) zeros.push_back({id, 0.0});
        CHECK(approx::error_propagation_bound(spec, zeros, 1.0).root_bound == 0.0);
    }
    SUBCASE("range violations are reported per node") {
        const auto spec = fig3_catalog();
        std::vector<std::pair<hcm::NodeId, double>> big;
        for (const auto& [id, node] : hcm::all_nodes(spec)) big.push_back({id, 5.0});
        const auto report = approx::error_propagation_bound(spec, big, 1.0);
        CHECK_FALSE(report.range_issues.empty());
    }
    SUBCASE("matches the closed form for equal errors") {
        const auto spec = fig3_catalog();
        const auto dc = hcm::derived_constants(spec);
        const double eps = 0.05;
        std::vector<std::pair<hcm::NodeId, double>> all;
        for (const auto& [id, node] : hcm::all_nodes(spec)) all.push_back({id, eps});
        const auto report = approx::error_propagation_bound(spec, all, 1.0);
        const double kappa = double(dc.k_max) * dc.c_lip;
        CHECK(report.root_bound <= spec.level * std::pow(kappa, spec.level - 1) * eps + 1e-12);
    }
}

TEST_CASE("measured composed error stays under the propagated bound") {
    const auto spec = fig3_catalog();
    const auto plan = approx::plan_for_n(spec, 256, 2.0, 0.01);
    estimator::TrainConfig budget;
    budget.epochs = 120;
    budget.learning_rate = 0.25;
    budget.seed = 5;
    const auto fits = approx::fit_all_subnetworks(spec, plan, 1.0, budget, 77, 2);
    const auto assembled = approx::assemble(spec, plan, fits);

    std::vector<std::pair<hcm::NodeId, double>> eps;
    for (const auto& f : fits) eps.push_back({f.id, f.fit.measured_sup_error});
    const auto prop = approx::error_propagation_bound(spec, eps, 1.0);
    CHECK(prop.range_issues.empty());

    const double measured = approx::sup_abs_error(
        [&](std::span<const double> x) { return assembled.forward(x); },
        [&](std::span<const double> x) { return hcm::evaluate_hcm(spec, x); }, spec.d, 1.0, 2000,
        99);
    CHECK(measured <= prop.root_bound);
}

TEST_CASE("schedule and plan serialize") {
    const auto spec = fig3_catalog();
    const auto s = approx::schedule(4096, spec, {});
    const auto j = approx::schedule_to_json(s);
    CHECK(j.at("depth").get<int>() == 20);
    CHECK(j.at("resolutions").size() == 4);
    const auto p = approx::plan_for_n(spec, 4096, 2.0, 0.01);
    const auto pj = approx::plan_to_json(p);
    CHECK(pj.at("nodes").size() == 4);
}
