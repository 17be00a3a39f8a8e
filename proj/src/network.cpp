#include "hcmlab/network.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hcmlab::net {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<int> Network::widths() const {
    std::vector<int> out;
    for (int s = 0; s < depth(); ++s) out.push_back(static_cast<int>(layers[s].w.rows()));
    return out;
}

Eigen::VectorXd Network::forward_vec(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim) throw std::invalid_argument("network input has wrong dimension");
    Eigen::VectorXd z = x;
    for (int s = 0; s < depth(); ++s) {
        Eigen::VectorXd pre = layers[s].w * z + layers[s].b;
        z.resize(pre.size());
        for (Eigen::Index i = 0; i < pre.size(); ++i) z[i] = sigmoid(pre[i]);
    }
    return layers.back().w * z + layers.back().b;
}

double Network::forward(std::span<const double> x) const {
    if (output_dim() != 1) throw std::invalid_argument("forward requires a scalar-output network");
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward_vec(v)[0];
}

double Network::max_abs_coefficient() const {
    double m = 0.0;
    for (const auto& l : layers) {
        m = std::max(m, l.w.cwiseAbs().maxCoeff());
        if (l.b.size() > 0) m = std::max(m, l.b.cwiseAbs().maxCoeff());
    }
    return m;
}

void Network::check_shapes() const {
    if (layers.size() < 2) throw std::invalid_argument("network needs at least one hidden layer");
    int in = input_dim;
    for (std::size_t s = 0; s < layers.size(); ++s) {
        const auto& l = layers[s];
        if (l.w.cols() != in) {
            std::ostringstream os;
            os << "layer " << s << " expects " << l.w.cols() << " inputs, previous width is " << in;
            throw std::invalid_argument(os.str());
        }
        if (l.b.size() != l.w.rows())
            throw std::invalid_argument("bias length does not match layer rows");
        if (!l.w.allFinite() || !l.b.allFinite())
            throw std::invalid_argument("network coefficients must be finite");
        in = static_cast<int>(l.w.rows());
    }
}

ClassCheck in_class(const Network& net, const NetworkClass& cls) {
    ClassCheck c;
    if (net.depth() != cls.depth) {
        c.ok = false;
        std::ostringstream os;
        os << "depth " << net.depth() << " != " << cls.depth;
        c.reason = os.str();
        return c;
    }
    const auto w = net.widths();
    for (std::size_t s = 0; s < w.size(); ++s) {
        if (w[s] != cls.width) {
            c.ok = false;
            c.layer = static_cast<int>(s);
            std::ostringstream os;
            os << "hidden layer " << s << " has width " << w[s] << " != " << cls.width;
            c.reason = os.str();
            return c;
        }
    }
    for (std::size_t s = 0; s < net.layers.size(); ++s) {
        const auto& l = net.layers[s];
        for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
            if (std::abs(l.b[i]) > cls.alpha) {
                c = {false, "", static_cast<int>(s), static_cast<int>(i), -1, l.b[i]};
                std::ostringstream os;
                os << "bias (" << s << "," << i << ") = " << l.b[i] << " exceeds " << cls.alpha;
                c.reason = os.str();
                return c;
            }
            for (Eigen::Index j = 0; j < l.w.cols(); ++j) {
                if (std::abs(l.w(i, j)) > cls.alpha) {
                    c = {false, "", static_cast<int>(s), static_cast<int>(i),
                         static_cast<int>(j), l.w(i, j)};
                    std::ostringstream os;
                    os << "weight (" << s << "," << i << "," << j << ") = " << l.w(i, j)
                       << " exceeds " << cls.alpha;
                    c.reason = os.str();
                    return c;
                }
            }
        }
    }
    return c;
}

Network identity_block(double R) {
    if (R < 1.0) throw std::invalid_argument("identity block requires R >= 1");
    Network net;
    net.input_dim = 1;
    Layer hidden;
    hidden.w = Eigen::MatrixXd::Constant(1, 1, 1.0 / R);
    hidden.b = Eigen::VectorXd::Zero(1);
    Layer out;
    out.w = Eigen::MatrixXd::Constant(1, 1, 4.0 * R);
    out.b = Eigen::VectorXd::Constant(1, -2.0 * R);
    net.layers = {hidden, out};
    return net;
}

double recommended_pad_scale(int extra_layers, double working_bound, double resolution_m,
                             double smoothness_p) {
    const double steps = std::max(extra_layers - 1, 1);
    const double m2p = std::pow(resolution_m, 2.0 * smoothness_p);
    return std::max(1.0, steps * 8.0 * kSigmoidSecondDerivSup * working_bound * working_bound * m2p);
}

PadResult pad_depth(const Network& net, int extra_layers, double scale, double rule_min) {
    if (extra_layers < 0) throw std::invalid_argument("extra_layers must be >= 0");
    if (extra_layers > 0 && scale < 1.0)
        throw std::invalid_argument("identity scale must be >= 1");
    PadResult res;
    res.net = net;
    res.min_scale = rule_min;
    res.scale_meets_rule = (extra_layers == 0) || (scale >= rule_min);
    const int m = net.output_dim();
    for (int k = 0; k < extra_layers; ++k) {
        Layer out = res.net.layers.back();
        Layer hidden;
        hidden.w = out.w / scale;
        hidden.b = out.b / scale;
        Layer new_out;
        new_out.w = Eigen::MatrixXd::Zero(m, m);
        new_out.w.diagonal().setConstant(4.0 * scale);
        new_out.b = Eigen::VectorXd::Constant(m, -2.0 * scale);
        res.net.layers.back() = hidden;
        res.net.layers.push_back(new_out);
    }
    return res;
}

Network parallel_compose(std::span<const Network> nets) {
    if (nets.empty()) throw std::invalid_argument("parallel_compose needs at least one network");
    const int d = nets[0].input_dim;
    const int L = nets[0].depth();
    for (const auto& n : nets) {
        if (n.input_dim != d) throw std::invalid_argument("input dimensions differ");
        if (n.depth() != L) throw std::invalid_argument("depths differ");
    }
    Network out;
    out.input_dim = d;
    out.layers.resize(L + 1);
    for (int s = 0; s <= L; ++s) {
        Eigen::Index rows = 0, cols = 0;
        for (const auto& n : nets) {
            rows += n.layers[s].w.rows();
            cols += n.layers[s].w.cols();
        }
        if (s == 0) cols = d;  // first stage reads the shared input
        Layer l;
        l.w = Eigen::MatrixXd::Zero(rows, cols);
        l.b = Eigen::VectorXd::Zero(rows);
        Eigen::Index ro = 0, co = 0;
        for (const auto& n : nets) {
            const auto& src = n.layers[s];
            if (s == 0) {
                l.w.block(ro, 0, src.w.rows(), d) = src.w;
            } else {
                l.w.block(ro, co, src.w.rows(), src.w.cols()) = src.w;
                co += src.w.cols();
            }
            l.b.segment(ro, src.b.size()) = src.b;
            ro += src.w.rows();
        }
        out.layers[s] = std::move(l);
    }
    return out;
}

Network embed_inputs(const Network& net, std::span<const int> indices, int new_input_dim) {
    if (static_cast<int>(indices.size()) != net.input_dim)
        throw std::invalid_argument("index list length must equal network input dimension");
    for (int i : indices)
        if (i < 0 || i >= new_input_dim) throw std::invalid_argument("embed index out of range");
    Network out = net;
    out.input_dim = new_input_dim;
    Layer l0;
    l0.w = Eigen::MatrixXd::Zero(net.layers[0].w.rows(), new_input_dim);
    l0.b = net.layers[0].b;
    for (int c = 0; c < net.input_dim; ++c)
        l0.w.col(indices[c]) += net.layers[0].w.col(c);
    out.layers[0] = std::move(l0);
    return out;
}

Network serial_splice(const Network& front, const Network& back) {
    if (back.input_dim != front.output_dim())
        throw std::invalid_argument("back input dimension must equal front output count");
    Network out;
    out.input_dim = front.input_dim;
    out.layers.assign(front.layers.begin(), front.layers.end() - 1);
    const Layer& f_out = front.layers.back();
    const Layer& b_in = back.layers.front();
    Layer merged;
    merged.w = b_in.w * f_out.w;
    merged.b = b_in.w * f_out.b + b_in.b;
    out.layers.push_back(std::move(merged));
    out.layers.insert(out.layers.end(), back.layers.begin() + 1, back.layers.end());
    return out;
}

Network stack_levels(const std::vector<std::vector<Network>>& levels) {
    if (levels.empty() || levels[0].empty())
        throw std::invalid_argument("stack_levels needs at least one non-empty level");
    const int L0 = levels[0][0].depth();
    for (const auto& group : levels)
        for (const auto& n : group)
            if (n.depth() != L0)
                throw std::invalid_argument("all subnetworks must share one depth");

    Network current = parallel_compose(levels[0]);
    for (std::size_t lev = 1; lev < levels.size(); ++lev) {
        const int avail = current.output_dim();
        int needed = 0;
        for (const auto& n : levels[lev]) needed += n.input_dim;
        if (needed != avail) {
            std::ostringstream os;
            os << "level " << lev + 1 << " consumes " << needed << " inputs but level " << lev
               << " produces " << avail;
            throw std::invalid_argument(os.str());
        }
        std::vector<Network> embedded;
        embedded.reserve(levels[lev].size());
        int offset = 0;
        for (const auto& n : levels[lev]) {
            std::vector<int> idx(n.input_dim);
            for (int i = 0; i < n.input_dim; ++i) idx[i] = offset + i;
            offset += n.input_dim;
            embedded.push_back(embed_inputs(n, idx, avail));
        }
        current = serial_splice(current, parallel_compose(embedded));
    }
    return current;
}

Network pad_width(const Network& net, int width) {
    Network out = net;
    for (int s = 0; s < out.depth(); ++s) {
        const int have = static_cast<int>(out.layers[s].w.rows());
        if (have > width) throw std::invalid_argument("pad_width cannot shrink a layer");
        if (have == width) continue;
        Layer& l = out.layers[s];
        l.w.conservativeResize(width, Eigen::NoChange);
        l.w.bottomRows(width - have).setZero();
        l.b.conservativeResize(width);
        l.b.tail(width - have).setZero();
        Layer& next = out.layers[s + 1];
        next.w.conservativeResize(Eigen::NoChange, width);
        next.w.rightCols(width - have).setZero();
    }
    return out;
}

nlohmann::json network_to_json(const Network& net) {
    nlohmann::json j;
    j["d"] = net.input_dim;
    j["L"] = net.depth();
    j["widths"] = net.widths();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < l.w.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            row.push_back(l.b[i]);  // bias in column 0
            for (Eigen::Index c = 0; c < l.w.cols(); ++c) row.push_back(l.w(i, c));
            rows.push_back(std::move(row));
        }
        layers.push_back(std::move(rows));
    }
    j["layers"] = std::move(layers);
    return j;
}

Network network_from_json(const nlohmann::json& j) {
    Network net;
    net.input_dim = j.at("d").get<int>();
    const auto& layers = j.at("layers");
    int in = net.input_dim;
    for (const auto& rows : layers) {
        Layer l;
        const auto n_rows = static_cast<Eigen::Index>(rows.size());
        l.w = Eigen::MatrixXd::Zero(n_rows, in);
        l.b = Eigen::VectorXd::Zero(n_rows);
        for (Eigen::Index i = 0; i < n_rows; ++i) {
            const auto& row = rows[i];
            if (static_cast<int>(row.size()) != in + 1)
                throw std::invalid_argument("weight row has wrong length");
            l.b[i] = row[0].get<double>();
            for (int c = 0; c < in; ++c) l.w(i, c) = row[c + 1].get<double>();
        }
        in = static_cast<int>(n_rows);
        net.layers.push_back(std::move(l));
    }
    net.check_shapes();
    return net;
}

void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write network file: " + path);
    out << network_to_json(net).dump(2) << "\n";
}

Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open network file: " + path);
    nlohmann::json j;
    in >> j;
    return network_from_json(j);
}

}  // namespace hcmlab::net
