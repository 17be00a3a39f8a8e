#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hcmlab/network.hpp"
#include "hcmlab/rng.hpp"
#include "oracles.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>

using namespace hcmlab;
using net::Network;
using net::NetworkClass;

namespace {

Network random_network(Rng& rng, int d, std::vector<int> widths, double scale, int outputs = 1) {
    Network n;
    n.input_dim = d;
    int in = d;
    widths.push_back(outputs);
    for (std::size_t s = 0; s < widths.size(); ++s) {
        net::Layer l;
        l.w = Eigen::MatrixXd::Zero(widths[s], in);
        l.b = Eigen::VectorXd::Zero(widths[s]);
        for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
            l.b[i] = rng.uniform(-scale, scale);
            for (Eigen::Index j = 0; j < l.w.cols(); ++j) l.w(i, j) = rng.uniform(-scale, scale);
        }
        n.layers.push_back(std::move(l));
        in = widths[s];
    }
    return n;
}

double grid_sup_drift(const Network& block, int applications, double radius, int points) {
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
        const double x = -radius + 2.0 * radius * double(i) / double(points - 1);
        double v = x;
        for (int k = 0; k < applications; ++k) {
            const std::vector<double> in{v};
            v = block.forward(in);
        }
        worst = std::max(worst, std::abs(v - x));
    }
    return worst;
}

}  // namespace

TEST_CASE("sigmoid values and symmetry") {
    CHECK(net::sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(net::sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const double x = rng.uniform(-40, 40);
        CHECK(net::sigmoid(x) + net::sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(net::sigmoid(700.0) == doctest::Approx(1.0));
    CHECK(net::sigmoid(-700.0) > 0.0);
    CHECK(std::isfinite(net::sigmoid(-700.0)));
}

TEST_CASE("sigmoid derivative suprema match the closed forms") {
    double sup_d1 = 0.0, sup_d2 = 0.0;
    for (long i = 0; i <= 600000; ++i) {
        const double x = -3.0 + 6.0 * double(i) / 600000.0;
        const double s = net::sigmoid(x);
        sup_d1 = std::max(sup_d1, s * (1 - s));
        sup_d2 = std::max(sup_d2, std::abs(s * (1 - s) * (1 - 2 * s)));
    }
    CHECK(std::abs(sup_d1 - 0.25) <= 1e-6);
    CHECK(std::abs(sup_d2 - std::sqrt(3.0) / 18.0) <= 1e-6);
    CHECK(net::kSigmoidSecondDerivSup == doctest::Approx(std::sqrt(3.0) / 18.0).epsilon(1e-14));
}

TEST_CASE("forward: zero network and constant hidden unit") {
    Rng rng(1);
    Network zero = random_network(rng, 2, {3, 3}, 0.0);
    const std::vector<double> x{0.4, -0.7};
    CHECK(zero.forward(x) == 0.0);

    Network constant;
    constant.input_dim = 1;
    net::Layer h;
    h.w = Eigen::MatrixXd::Zero(1, 1);
    h.b = Eigen::VectorXd::Zero(1);
    net::Layer o;
    o.w = Eigen::MatrixXd::Constant(1, 1, 2.0);
    o.b = Eigen::VectorXd::Constant(1, 1.0);
    constant.layers = {h, o};
    const std::vector<double> t{3.3};
    CHECK(constant.forward(t) == doctest::Approx(2.0 * 0.5 + 1.0).epsilon(1e-15));
}

TEST_CASE("forward agrees with the unit-by-unit interpreter") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        const int d = rng.uniform_int(1, 4);
        const int L = rng.uniform_int(1, 3);
        std::vector<int> widths;
        for (int s = 0; s < L; ++s) widths.push_back(rng.uniform_int(1, 5));
        const Network n = random_network(rng, d, widths, 1.5);
        std::vector<double> x(d);
        for (int i = 0; i < 20; ++i) {
            for (auto& c : x) c = rng.uniform(-2, 2);
            const double a = n.forward(x);
            const double b = oracles::naive_forward(n, x);
            CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
        }
    }
}

TEST_CASE("class membership honors the closed coefficient bound") {
    Rng rng(2);
    Network n = random_network(rng, 2, {3, 3}, 0.5);
    n.layers[1].w(0, 0) = 1.0;  // exactly at the bound
    CHECK(net::in_class(n, {2, 3, 1.0}).ok);

    Network over = n;
    over.layers[1].w(2, 1) = 1.0 + 1e-9;
    const auto check = net::in_class(over, {2, 3, 1.0});
    CHECK_FALSE(check.ok);
    CHECK(check.layer == 1);
    CHECK(check.row == 2);
    CHECK(check.col == 1);

    Network widths = random_network(rng, 2, {3, 4}, 0.1);
    CHECK_FALSE(net::in_class(widths, {2, 3, 1.0}).ok);
    CHECK_FALSE(net::in_class(n, {3, 3, 1.0}).ok);
}

TEST_CASE("identity block: centering, class, and the curvature bound") {
    for (double R : {10.0, 100.0, 1000.0}) {
        const Network f = net::identity_block(R);
        const std::vector<double> zero{0.0};
        CHECK(std::abs(f.forward(zero)) <= 1e-12);
        CHECK(net::in_class(f, {1, 1, 4.0 * R}).ok);
        for (double a : {1.0, 2.0}) {
            const double bound = 2.0 * net::kSigmoidSecondDerivSup * a * a / R;
            CHECK(grid_sup_drift(f, 1, a, 1001) <= bound);
        }
    }
    CHECK_THROWS_AS(net::identity_block(0.5), std::invalid_argument);
}

TEST_CASE("depth padding holds the iterated drift bound") {
    SUBCASE("zero extra layers is the identity transform") {
        Rng rng(4);
        const Network n = random_network(rng, 2, {3}, 0.8);
        const auto padded = net::pad_depth(n, 0, 1.0);
        std::vector<double> x{0.3, -0.6};
        CHECK(padded.net.forward(x) == doctest::Approx(n.forward(x)).epsilon(1e-15));
        CHECK(padded.net.depth() == n.depth());
    }
    SUBCASE("rule-chosen scale keeps the drift under s/M^(2p)") {
        const int s = 2;
        const double M = 2, p = 1, B = 1;
        const double rule = net::recommended_pad_scale(s, B, M, p);
        const Network f = net::identity_block(rule);
        CHECK(grid_sup_drift(f, s, 2.0 * B, 1001) <= double(s) / std::pow(M, 2 * p));
    }
    SUBCASE("padding a constant network stays within the drift bound") {
        Network constant;
        constant.input_dim = 1;
        net::Layer h;
        h.w = Eigen::MatrixXd::Zero(1, 1);
        h.b = Eigen::VectorXd::Zero(1);
        net::Layer o;
        o.w = Eigen::MatrixXd::Zero(1, 1);
        o.b = Eigen::VectorXd::Constant(1, 0.75);
        constant.layers = {h, o};
        const int s = 3;
        const double M = 2, p = 1, B = 1;
        const double rule = net::recommended_pad_scale(s, B, M, p);
        const auto padded = net::pad_depth(constant, s, rule, rule);
        CHECK(padded.scale_meets_rule);
        CHECK(padded.net.depth() == constant.depth() + s);
        const std::vector<double> x{0.2};
        CHECK(std::abs(padded.net.forward(x) - 0.75) <= double(s) / std::pow(M, 2 * p));
    }
    SUBCASE("scale below the rule is recorded, not fatal") {
        const Network n = net::identity_block(10.0);
        const auto padded = net::pad_depth(n, 1, 2.0, 5.0);
        CHECK_FALSE(padded.scale_meets_rule);
        CHECK(padded.min_scale == doctest::Approx(5.0));
    }
}

TEST_CASE("parallel composition reproduces constituents exactly") {
    Rng rng(8);
    const Network f = random_network(rng, 3, {3, 3}, 1.0);
    const Network g = random_network(rng, 3, {5, 5}, 1.0);
    const std::vector<Network> both{f, g};
    const Network par = net::parallel_compose(both);
    CHECK(par.widths() == std::vector<int>{8, 8});
    CHECK(par.output_dim() == 2);
    std::vector<double> x(3);
    for (int t = 0; t < 50; ++t) {
        for (auto& c : x) c = rng.uniform(-2, 2);
        const Eigen::VectorXd out = par.forward_vec(Eigen::Map<const Eigen::VectorXd>(x.data(), 3));
        CHECK(out[0] == doctest::Approx(f.forward(x)).epsilon(1e-15));
        CHECK(out[1] == doctest::Approx(g.forward(x)).epsilon(1e-15));
    }
    const std::vector<Network> one{f};
    const Network same = net::parallel_compose(one);
    for (int t = 0; t < 10; ++t) {
        for (auto& c : x) c = rng.uniform(-2, 2);
        CHECK(same.forward(x) == doctest::Approx(f.forward(x)).epsilon(1e-15));
    }
    const Network deeper = random_network(rng, 3, {2, 2, 2}, 1.0);
    const std::vector<Network> bad{f, deeper};
    CHECK_THROWS_AS(net::parallel_compose(bad), std::invalid_argument);
}

TEST_CASE("stacking levels: single level equals parallel composition") {
    Rng rng(13);
    const Network f = random_network(rng, 2, {3}, 1.0);
    const Network g = random_network(rng, 2, {2}, 1.0);
    const Network stacked = net::stack_levels({{f, g}});
    const Network par = net::parallel_compose(std::vector<Network>{f, g});
    std::vector<double> x{0.5, -0.25};
    CHECK(stacked.forward_vec(Eigen::Map<const Eigen::VectorXd>(x.data(), 2)) ==
          par.forward_vec(Eigen::Map<const Eigen::VectorXd>(x.data(), 2)));
}

TEST_CASE("two stacked identity levels drift by at most the summed bounds") {
    const double R = 200.0;
    const Network id = net::identity_block(R);
    const Network stacked = net::stack_levels({{id}, {id}});
    CHECK(stacked.depth() == 2);
    const double a = 1.0;
    const double one = 2.0 * net::kSigmoidSecondDerivSup * a * a / R;
    // second application sees inputs inflated by the first drift
    const double inflated = a + one;
    const double budget = one + 2.0 * net::kSigmoidSecondDerivSup * inflated * inflated / R;
    double worst = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        const double x = -a + 2.0 * a * double(i) / 1000.0;
        const std::vector<double> in{x};
        worst = std::max(worst, std::abs(stacked.forward(in) - x));
    }
    CHECK(worst <= budget);
}

TEST_CASE("stacked nests evaluate exactly and report the level arithmetic") {
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
        const int d = rng.uniform_int(1, 3);
        const int L0 = rng.uniform_int(1, 2);
        std::vector<int> w0(L0);
        for (auto& w : w0) w = rng.uniform_int(1, 4);
        // level 1: two subnetworks over the same input
        const Network h1 = random_network(rng, d, w0, 1.0);
        const Network h2 = random_network(rng, d, w0, 1.0);
        // level 2: one subnetwork consuming both outputs
        std::vector<int> w1(L0);
        for (auto& w : w1) w = rng.uniform_int(1, 4);
        const Network top = random_network(rng, 2, w1, 1.0);

        const Network stacked = net::stack_levels({{h1, h2}, {top}});
        CHECK(stacked.depth() == 2 * L0);

        std::vector<double> x(d);
        for (auto& c : x) c = rng.uniform(-1, 1);
        const std::vector<double> mid{h1.forward(x), h2.forward(x)};
        const double want = top.forward(mid);
        const double got = stacked.forward(x);
        CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("level width arithmetic matches the shape rule") {
    Rng rng(23);
    const Network a = random_network(rng, 6, {4}, 0.7);
    const Network b = random_network(rng, 6, {5}, 0.7);
    const Network c = random_network(rng, 6, {6}, 0.7);
    const Network top = random_network(rng, 3, {7}, 0.7);
    const Network stacked = net::stack_levels({{a, b, c}, {top}});
    CHECK(stacked.depth() == 2);
    CHECK(stacked.widths() == std::vector<int>{15, 7});
    const Network padded = net::pad_width(stacked, 15);
    CHECK(padded.widths() == std::vector<int>{15, 15});
    std::vector<double> x(6);
    for (auto& v : x) v = rng.uniform(-1, 1);
    CHECK(padded.forward(x) == doctest::Approx(stacked.forward(x)).epsilon(1e-15));
}

TEST_CASE("weight bound arithmetic after stacking") {
    // constituents within alpha0; the spliced boundary multiplies an output
    // weight by a first-layer weight, so alpha0^2 covers the products
    Rng rng(31);
    const double alpha0 = 0.9;
    const Network h1 = random_network(rng, 2, {2}, alpha0 * 0.3);
    const Network h2 = random_network(rng, 2, {2}, alpha0 * 0.3);
    const Network top = random_network(rng, 2, {2}, alpha0 * 0.3);
    const Network stacked = net::pad_width(net::stack_levels({{h1, h2}, {top}}), 4);
    CHECK(net::in_class(stacked, {2, 4, alpha0 * alpha0}).ok);

    // large biases can push a spliced bias past alpha0^2; that is flagged
    Network big1 = h1, big2 = h2, bigtop = top;
    big1.layers.back().b.setConstant(alpha0);
    big2.layers.back().b.setConstant(alpha0);
    bigtop.layers.front().w.setConstant(alpha0);
    bigtop.layers.front().b.setConstant(alpha0);
    const Network risky = net::pad_width(net::stack_levels({{big1, big2}, {bigtop}}), 4);
    const auto check = net::in_class(risky, {2, 4, alpha0 * alpha0});
    CHECK_FALSE(check.ok);  // bias reaches (K+1) alpha0^2 > alpha0^2
}

TEST_CASE("serialization round trip is exact") {
    Rng rng(17);
    const Network n = random_network(rng, 3, {4, 4}, 1.3);
    const auto path = std::filesystem::temp_directory_path() / "hcmlab_net_roundtrip.json";
    net::save_network(n, path.string());
    const Network back = net::load_network(path.string());
    std::vector<double> x(3);
    for (int t = 0; t < 100; ++t) {
        for (auto& c : x) c = rng.uniform(-2, 2);
        CHECK(back.forward(x) == n.forward(x));  // bit-identical coefficients
    }
    std::filesystem::remove(path);
}

TEST_CASE("embedding inputs accumulates repeated indices") {
    Rng rng(19);
    const Network n = random_network(rng, 2, {3}, 1.0);
    const std::vector<int> idx{1, 1};
    const Network embedded = net::embed_inputs(n, idx, 3);
    std::vector<double> x{0.0, 0.4, 0.0};
    const std::vector<double> direct{0.4, 0.4};
    CHECK(embedded.forward(x) == doctest::Approx(n.forward(direct)).epsilon(1e-14));
}
