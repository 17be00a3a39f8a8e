#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include <span>
#include <string>
#include <vector>

namespace hcmlab::net {

double sigmoid(double x);

// One affine stage: maps in_dim() values to rows() values. Hidden stages are
// followed by the sigmoid, the final stage is plain affine.
struct Layer {
    Eigen::MatrixXd w;  // rows x cols = out x in
    Eigen::VectorXd b;
};

// Fully connected sigmoid network. layers.size() == L + 1 where L is the
// number of hidden layers. Module boundaries expose scalar output; the
// multi-output form is used internally by the structural combinators.
struct Network {
    int input_dim = 0;
    std::vector<Layer> layers;

    int depth() const { return static_cast<int>(layers.size()) - 1; }
    int output_dim() const { return static_cast<int>(layers.back().w.rows()); }
    std::vector<int> widths() const;

    Eigen::VectorXd forward_vec(const Eigen::VectorXd& x) const;
    double forward(std::span<const double> x) const;  // requires scalar output

    double max_abs_coefficient() const;
    void check_shapes() const;  // throws on inconsistent chaining / non-finite
};

struct NetworkClass {
    int depth = 1;   // L
    int width = 1;   // r
    double alpha = 1.0;
};

struct ClassCheck {
    bool ok = true;
    std::string reason;
    int layer = -1;
    int row = -1;
    int col = -1;  // -1 denotes the bias column
    double value = 0.0;
};

ClassCheck in_class(const Network& net, const NetworkClass& cls);

// One-neuron block approximating the identity on [-a,a] with sup error at
// most 2*sup|sigmoid''|*a^2/R; coefficients bounded by 4R.
Network identity_block(double R);

inline constexpr double kSigmoidSecondDerivSup = 0.09622504486493764;  // sqrt(3)/18

// Minimal identity scale so that s stacked identity blocks drift by at most
// s/M^(2p) on [-2B, 2B]. The s = 1 case needs the full per-step budget, hence
// the max(s-1, 1) factor.
double recommended_pad_scale(int extra_layers, double working_bound, double resolution_m,
                             double smoothness_p);

struct PadResult {
    Network net;
    bool scale_meets_rule = true;
    double min_scale = 0.0;
};

// Appends `extra_layers` identity blocks (one per output component) after the
// output stage. rule_min below the scale makes the drift bound void; that is
// recorded, not fatal.
PadResult pad_depth(const Network& net, int extra_layers, double scale, double rule_min = 0.0);

// Same depth and input dimension; outputs are concatenated, hidden layers are
// laid out block-diagonally, so each constituent is reproduced exactly.
Network parallel_compose(std::span<const Network> nets);

// Rewrites the first stage to read from a larger input vector; indices are
// 0-based positions, repeated indices accumulate.
Network embed_inputs(const Network& net, std::span<const int> indices, int new_input_dim);

// back's input is spliced onto front's output stage (exact affine merge).
Network serial_splice(const Network& front, const Network& back);

// Per-level parallel groups, bottom first. All subnetworks must share one
// depth; level i+1 networks consume the concatenated level-i outputs in
// order, split by their input dimensions.
Network stack_levels(const std::vector<std::vector<Network>>& levels);

// Adds dead units (zero fan-in/fan-out) until every hidden layer has
// `width`; exact.
Network pad_width(const Network& net, int width);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace hcmlab::net
