#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "temnn/geom.hpp"
#include "temnn/kernels.hpp"

namespace temnn::ad {

// Row-major float64 matrix.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

enum class ParamGroup { weights, tau };

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape as value
    ParamGroup group = ParamGroup::weights;

    Parameter() = default;
    Parameter(std::string n, Tensor t, ParamGroup g = ParamGroup::weights)
        : name(std::move(n)), value(std::move(t)), grad(value.rows, value.cols), group(g) {}
};

// Dynamic reverse-mode tape, rebuilt per forward pass. Node ids are indices
// into the op record list; creation order is a topological order, so one
// reverse sweep propagates all gradients.
class Tape {
public:
    using NodeId = int;

    NodeId constant(Tensor t);
    NodeId param(Parameter& p);

    // y = x * w + 1 * b   (x: n x a, w: a x b, b: 1 x b)
    NodeId linear(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId gather_rows(NodeId x, std::vector<int> idx);
    NodeId scatter_add_rows(NodeId x, std::vector<int> idx, int out_rows);
    NodeId row_scale(NodeId x, NodeId s);  // s: n x 1
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId x, double c);
    NodeId mse(NodeId pred, NodeId target);  // scalar mean over all entries

    const Tensor& value(NodeId id) const { return nodes_[id].val; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

    // Reverse sweep from a scalar loss; accumulates into Parameter::grad.
    void backward(NodeId loss);

private:
    enum class Op {
        constant, param, linear, relu, sigmoid, concat_cols, gather_rows,
        scatter_add_rows, row_scale, add, scale, mse
    };

    struct Node {
        Op op;
        Tensor val;
        Tensor grad;
        int a = -1, b = -1, c = -1;
        std::vector<int> idx;
        kernels::ScatterPlan plan;
        double scalar = 0.0;
        Parameter* parameter = nullptr;
    };

    NodeId push(Node n);
    const Tensor& val_of(NodeId id) const;

    std::vector<Node> nodes_;
};

// Central finite-difference check of reverse-mode gradients.
//
// loss_fn(true) must rebuild the graph from current parameter values, run
// backward, and leave gradients in Parameter::grad (zeroed beforehand);
// loss_fn(false) only returns the loss. Large parameters are subsampled.
// Relative error per entry: |ad - fd| / max(1e-6, |ad|, |fd|).
struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    int checked = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::vector<GradCheckEntry> per_param;
};

GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                           std::vector<Parameter*> params, double eps,
                           int max_entries_per_param = 200, std::uint64_t seed = 0);

}  // namespace temnn::ad
