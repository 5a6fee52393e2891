#include "temnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace temnn::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
    throw error(std::string(op) + ": " + detail);
}

std::string dims(const Tensor& t) {
    return std::to_string(t.rows) + "x" + std::to_string(t.cols);
}

}  // namespace

Tape::NodeId Tape::push(Node n) {
    n.grad = Tensor(n.val.rows, n.val.cols);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Tape::val_of(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) throw error("tape: bad node id");
    return nodes_[id].val;
}

Tape::NodeId Tape::constant(Tensor t) {
    Node n;
    n.op = Op::constant;
    n.val = std::move(t);
    return push(std::move(n));
}

Tape::NodeId Tape::param(Parameter& p) {
    Node n;
    n.op = Op::param;
    n.val = p.value;
    n.parameter = &p;
    return push(std::move(n));
}

Tape::NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = val_of(x);
    const Tensor& wv = val_of(w);
    const Tensor& bv = val_of(b);
    if (xv.cols != wv.rows) shape_fail("linear", "x is " + dims(xv) + " but w is " + dims(wv));
    if (bv.rows != 1 || bv.cols != wv.cols)
        shape_fail("linear", "bias is " + dims(bv) + ", expected 1x" + std::to_string(wv.cols));
    Node n;
    n.op = Op::linear;
    n.a = x; n.b = w; n.c = b;
    n.val = Tensor(xv.rows, wv.cols);
    kernels::matmul(xv.data(), xv.rows, xv.cols, wv.data(), wv.cols, n.val.data());
    for (int r = 0; r < n.val.rows; ++r)
        for (int j = 0; j < n.val.cols; ++j) n.val.at(r, j) += bv.at(0, j);
    return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
    Node n;
    n.op = Op::relu;
    n.a = x;
    n.val = val_of(x);
    for (double& v : n.val.v) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId x) {
    Node n;
    n.op = Op::sigmoid;
    n.a = x;
    n.val = val_of(x);
    for (double& v : n.val.v) {
        if (v >= 0.0) {
            double e = std::exp(-v);
            v = 1.0 / (1.0 + e);
        } else {
            double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    return push(std::move(n));
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
    const Tensor& av = val_of(a);
    const Tensor& bv = val_of(b);
    if (av.rows != bv.rows)
        shape_fail("concat_cols", dims(av) + " vs " + dims(bv));
    Node n;
    n.op = Op::concat_cols;
    n.a = a; n.b = b;
    n.val = Tensor(av.rows, av.cols + bv.cols);
    for (int r = 0; r < av.rows; ++r) {
        for (int j = 0; j < av.cols; ++j) n.val.at(r, j) = av.at(r, j);
        for (int j = 0; j < bv.cols; ++j) n.val.at(r, av.cols + j) = bv.at(r, j);
    }
    return push(std::move(n));
}

Tape::NodeId Tape::gather_rows(NodeId x, std::vector<int> idx) {
    const Tensor& xv = val_of(x);
    for (int i : idx)
        if (i < 0 || i >= xv.rows) shape_fail("gather_rows", "row index out of range");
    Node n;
    n.op = Op::gather_rows;
    n.a = x;
    n.val = Tensor(static_cast<int>(idx.size()), xv.cols);
    for (int r = 0; r < n.val.rows; ++r)
        for (int j = 0; j < xv.cols; ++j) n.val.at(r, j) = xv.at(idx[r], j);
    n.plan = kernels::make_scatter_plan(idx, xv.rows);  // for the backward scatter
    n.idx = std::move(idx);
    return push(std::move(n));
}

Tape::NodeId Tape::scatter_add_rows(NodeId x, std::vector<int> idx, int out_rows) {
    const Tensor& xv = val_of(x);
    if (static_cast<int>(idx.size()) != xv.rows)
        shape_fail("scatter_add_rows", "index count does not match rows");
    Node n;
    n.op = Op::scatter_add_rows;
    n.a = x;
    n.plan = kernels::make_scatter_plan(idx, out_rows);
    n.val = Tensor(out_rows, xv.cols);
    kernels::scatter_add(n.plan, xv.data(), xv.cols, n.val.data());
    n.idx = std::move(idx);
    return push(std::move(n));
}

Tape::NodeId Tape::row_scale(NodeId x, NodeId s) {
    const Tensor& xv = val_of(x);
    const Tensor& sv = val_of(s);
    if (sv.rows != xv.rows || sv.cols != 1)
        shape_fail("row_scale", "scale is " + dims(sv) + ", expected " + std::to_string(xv.rows) + "x1");
    Node n;
    n.op = Op::row_scale;
    n.a = x; n.b = s;
    n.val = xv;
    for (int r = 0; r < xv.rows; ++r) {
        double f = sv.at(r, 0);
        for (int j = 0; j < xv.cols; ++j) n.val.at(r, j) *= f;
    }
    return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = val_of(a);
    const Tensor& bv = val_of(b);
    if (av.rows != bv.rows || av.cols != bv.cols)
        shape_fail("add", dims(av) + " vs " + dims(bv));
    Node n;
    n.op = Op::add;
    n.a = a; n.b = b;
    n.val = av;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.v[i] += bv.v[i];
    return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId x, double c) {
    Node n;
    n.op = Op::scale;
    n.a = x;
    n.scalar = c;
    n.val = val_of(x);
    for (double& v : n.val.v) v *= c;
    return push(std::move(n));
}

Tape::NodeId Tape::mse(NodeId pred, NodeId target) {
    const Tensor& pv = val_of(pred);
    const Tensor& tv = val_of(target);
    if (pv.rows != tv.rows || pv.cols != tv.cols)
        shape_fail("mse", dims(pv) + " vs " + dims(tv));
    if (pv.size() == 0) shape_fail("mse", "empty tensors");
    Node n;
    n.op = Op::mse;
    n.a = pred; n.b = target;
    double sum = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        double d = pv.v[i] - tv.v[i];
        sum += d * d;
    }
    n.val = Tensor(1, 1);
    n.val.at(0, 0) = sum / static_cast<double>(pv.size());
    return push(std::move(n));
}

void Tape::backward(NodeId loss) {
    const Tensor& lv = val_of(loss);
    if (lv.rows != 1 || lv.cols != 1) throw error("backward: loss must be a 1x1 scalar");
    for (Node& n : nodes_) n.grad.zero();
    nodes_[loss].grad.at(0, 0) = 1.0;

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[id];
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::constant:
                break;
            case Op::param:
                for (size_t i = 0; i < g.size(); ++i) n.parameter->grad.v[i] += g.v[i];
                break;
            case Op::linear: {
                Tensor& gx = nodes_[n.a].grad;
                Tensor& gw = nodes_[n.b].grad;
                Tensor& gb = nodes_[n.c].grad;
                const Tensor& xv = nodes_[n.a].val;
                const Tensor& wv = nodes_[n.b].val;
                Tensor tmp(gx.rows, gx.cols);
                kernels::matmul_nt(g.data(), g.rows, g.cols, wv.data(), wv.rows, tmp.data());
                for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += tmp.v[i];
                Tensor tw(gw.rows, gw.cols);
                kernels::matmul_tn(xv.data(), xv.rows, xv.cols, g.data(), g.cols, tw.data());
                for (size_t i = 0; i < gw.size(); ++i) gw.v[i] += tw.v[i];
                for (int r = 0; r < g.rows; ++r)
                    for (int j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(r, j);
                break;
            }
            case Op::relu: {
                Tensor& gx = nodes_[n.a].grad;
                const Tensor& xv = nodes_[n.a].val;
                for (size_t i = 0; i < g.size(); ++i)
                    if (xv.v[i] > 0.0) gx.v[i] += g.v[i];
                break;
            }
            case Op::sigmoid: {
                Tensor& gx = nodes_[n.a].grad;
                for (size_t i = 0; i < g.size(); ++i) {
                    double s = n.val.v[i];
                    gx.v[i] += g.v[i] * s * (1.0 - s);
                }
                break;
            }
            case Op::concat_cols: {
                Tensor& ga = nodes_[n.a].grad;
                Tensor& gb = nodes_[n.b].grad;
                for (int r = 0; r < g.rows; ++r) {
                    for (int j = 0; j < ga.cols; ++j) ga.at(r, j) += g.at(r, j);
                    for (int j = 0; j < gb.cols; ++j) gb.at(r, j) += g.at(r, ga.cols + j);
                }
                break;
            }
            case Op::gather_rows: {
                Tensor& gx = nodes_[n.a].grad;
                Tensor tmp(gx.rows, gx.cols);
                kernels::scatter_add(n.plan, g.data(), g.cols, tmp.data());
                for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += tmp.v[i];
                break;
            }
            case Op::scatter_add_rows: {
                Tensor& gx = nodes_[n.a].grad;
                for (int r = 0; r < gx.rows; ++r)
                    for (int j = 0; j < gx.cols; ++j) gx.at(r, j) += g.at(n.idx[r], j);
                break;
            }
            case Op::row_scale: {
                Tensor& gx = nodes_[n.a].grad;
                Tensor& gs = nodes_[n.b].grad;
                const Tensor& xv = nodes_[n.a].val;
                const Tensor& sv = nodes_[n.b].val;
                for (int r = 0; r < g.rows; ++r) {
                    double f = sv.at(r, 0);
                    double acc = 0.0;
                    for (int j = 0; j < g.cols; ++j) {
                        gx.at(r, j) += g.at(r, j) * f;
                        acc += g.at(r, j) * xv.at(r, j);
                    }
                    gs.at(r, 0) += acc;
                }
                break;
            }
            case Op::add: {
                Tensor& ga = nodes_[n.a].grad;
                Tensor& gb = nodes_[n.b].grad;
                for (size_t i = 0; i < g.size(); ++i) {
                    ga.v[i] += g.v[i];
                    gb.v[i] += g.v[i];
                }
                break;
            }
            case Op::scale: {
                Tensor& gx = nodes_[n.a].grad;
                for (size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] * n.scalar;
                break;
            }
            case Op::mse: {
                Tensor& gp = nodes_[n.a].grad;
                const Tensor& pv = nodes_[n.a].val;
                const Tensor& tv = nodes_[n.b].val;
                double f = g.at(0, 0) * 2.0 / static_cast<double>(pv.size());
                for (size_t i = 0; i < pv.size(); ++i) gp.v[i] += f * (pv.v[i] - tv.v[i]);
                break;
            }
        }
    }
}

GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                           std::vector<Parameter*> params, double eps,
                           int max_entries_per_param, std::uint64_t seed) {
    for (Parameter* p : params) p->grad.zero();
    loss_fn(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    std::mt19937_64 rng(seed);
    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        std::vector<size_t> entries(p.value.size());
        std::iota(entries.begin(), entries.end(), 0);
        if (static_cast<int>(entries.size()) > max_entries_per_param) {
            for (int k = 0; k < max_entries_per_param; ++k) {
                size_t j = k + rng() % (entries.size() - k);
                std::swap(entries[k], entries[j]);
            }
            entries.resize(max_entries_per_param);
        }
        GradCheckEntry ent;
        ent.param = p.name;
        for (size_t e : entries) {
            double saved = p.value.v[e];
            p.value.v[e] = saved + eps;
            double lp = loss_fn(false);
            p.value.v[e] = saved - eps;
            double lm = loss_fn(false);
            p.value.v[e] = saved;
            double fd = (lp - lm) / (2.0 * eps);
            double adg = analytic[pi].v[e];
            double rel = std::abs(adg - fd) / std::max({1e-6, std::abs(adg), std::abs(fd)});
            if (rel > ent.max_rel_err) ent.max_rel_err = rel;
            ++ent.checked;
        }
        if (ent.max_rel_err > report.max_rel_err) {
            report.max_rel_err = ent.max_rel_err;
            report.worst_param = ent.param;
        }
        report.per_param.push_back(std::move(ent));
    }
    // restore analytic gradients for the caller
    for (size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
    return report;
}

}  // namespace temnn::ad
