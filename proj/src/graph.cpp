#include "seqcomp/graph.hpp"

#include <cmath>
#include <utility>

#include "seqcomp/error.hpp"

namespace seqcomp::num {

Var Graph::push(Tensor value, std::vector<int> parents, BackwardFn back) {
    Node node;
    node.value = std::move(value);
    node.parents = std::move(parents);
    for (int p : node.parents) {
        if (nodes_[p].requires_grad) {
            node.requires_grad = true;
            break;
        }
    }
    if (node.requires_grad) node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Graph::grads(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.values.size(), 0.0);
    return n.grad;
}

void Graph::backward(Var root) {
    if (!root.valid()) throw ShapeError("backward: invalid root");
    if (nodes_[root.id].value.size() != 1)
        throw ShapeError("backward: root must be a scalar, got " + nodes_[root.id].value.shape_str());
    for (Node& n : nodes_) n.grad.clear();
    grads(root.id)[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty() || !n.back) continue;
        n.back(*this, id);
    }
}

Tensor Graph::grad_of(Var v) const {
    const Node& n = nodes_[v.id];
    Tensor g = Tensor::zeros(n.value.shape);
    if (!n.grad.empty()) g.values = n.grad;
    return g;
}

Var Graph::add(Var a, Var b) {
    return push(num::add(value(a), value(b)), {a.id, b.id}, [a, b](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        if (g.needs(a.id)) {
            auto& ga = g.grads(a.id);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.needs(b.id)) {
            auto& gb = g.grads(b.id);
            for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        }
    });
}

Var Graph::sub(Var a, Var b) {
    return push(num::sub(value(a), value(b)), {a.id, b.id}, [a, b](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        if (g.needs(a.id)) {
            auto& ga = g.grads(a.id);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (g.needs(b.id)) {
            auto& gb = g.grads(b.id);
            for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
    });
}

Var Graph::mul(Var a, Var b) {
    return push(num::mul(value(a), value(b)), {a.id, b.id}, [a, b](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        const auto& va = g.val(a.id).values;
        const auto& vb = g.val(b.id).values;
        if (g.needs(a.id)) {
            auto& ga = g.grads(a.id);
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
        }
        if (g.needs(b.id)) {
            auto& gb = g.grads(b.id);
            for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
    });
}

Var Graph::scale(Var a, double c) {
    return push(num::scale(value(a), c), {a.id}, [a, c](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        auto& ga = g.grads(a.id);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
    });
}

Var Graph::add_n(const std::vector<Var>& vs) {
    if (vs.empty()) throw ShapeError("add_n: empty operand list");
    Tensor out = value(vs[0]);
    std::vector<int> parents{vs[0].id};
    for (size_t i = 1; i < vs.size(); ++i) {
        out = num::add(out, value(vs[i]));
        parents.push_back(vs[i].id);
    }
    std::vector<Var> captured = vs;
    return push(std::move(out), std::move(parents), [captured](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        for (Var v : captured) {
            if (!g.needs(v.id)) continue;
            auto& gv = g.grads(v.id);
            for (size_t i = 0; i < go.size(); ++i) gv[i] += go[i];
        }
    });
}

Var Graph::matmul(Var a, Var b) {
    return push(num::matmul(value(a), value(b)), {a.id, b.id}, [a, b](Graph& g, int self) {
        const Tensor& va = g.val(a.id);
        const Tensor& vb = g.val(b.id);
        const auto& go = g.grad_ro(self);
        const int m = va.rows(), k = va.cols(), n = vb.cols();
        if (g.needs(a.id)) {  // dA += G * B^T
            auto& ga = g.grads(a.id);
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* grow = &go[static_cast<size_t>(i) * n];
                    const double* brow = &vb.values[static_cast<size_t>(p) * n];
                    for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[static_cast<size_t>(i) * k + p] += s;
                }
        }
        if (g.needs(b.id)) {  // dB += A^T * G
            auto& gb = g.grads(b.id);
            for (int i = 0; i < m; ++i) {
                const double* arow = &va.values[static_cast<size_t>(i) * k];
                const double* grow = &go[static_cast<size_t>(i) * n];
                for (int p = 0; p < k; ++p) {
                    const double aip = arow[p];
                    if (aip == 0.0) continue;
                    double* gbrow = &gb[static_cast<size_t>(p) * n];
                    for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Var Graph::transpose(Var a) {
    return push(num::transpose(value(a)), {a.id}, [a](Graph& g, int self) {
        const Tensor& out = g.val(self);
        const auto& go = g.grad_ro(self);
        auto& ga = g.grads(a.id);
        const int r = out.rows(), c = out.cols();  // a is c x r
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                ga[static_cast<size_t>(j) * r + i] += go[static_cast<size_t>(i) * c + j];
    });
}

Var Graph::softmax_rows(Var a) {
    return push(num::softmax_rows(value(a)), {a.id}, [a](Graph& g, int self) {
        const Tensor& y = g.val(self);
        const auto& go = g.grad_ro(self);
        auto& ga = g.grads(a.id);
        const int rows = y.rows(), n = y.cols();
        for (int i = 0; i < rows; ++i) {
            const double* yrow = &y.values[static_cast<size_t>(i) * n];
            const double* grow = &go[static_cast<size_t>(i) * n];
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += grow[j] * yrow[j];
            double* arow = &ga[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) arow[j] += yrow[j] * (grow[j] - dot);
        }
    });
}

Var Graph::layer_norm(Var x, Var gamma, Var beta) {
    return push(num::layer_norm(value(x), value(gamma), value(beta)), {x.id, gamma.id, beta.id},
                [x, gamma, beta](Graph& g, int self) {
                    const Tensor& vx = g.val(x.id);
                    const Tensor& vgamma = g.val(gamma.id);
                    const auto& go = g.grad_ro(self);
                    const int rows = vx.rows(), n = vx.cols();
                    std::vector<double> xhat(n), dxhat(n);
                    for (int i = 0; i < rows; ++i) {
                        const double* xrow = &vx.values[static_cast<size_t>(i) * n];
                        const double* grow = &go[static_cast<size_t>(i) * n];
                        double mean = 0.0;
                        for (int j = 0; j < n; ++j) mean += xrow[j];
                        mean /= n;
                        double var = 0.0;
                        for (int j = 0; j < n; ++j) var += (xrow[j] - mean) * (xrow[j] - mean);
                        var /= n;
                        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                        for (int j = 0; j < n; ++j) xhat[j] = (xrow[j] - mean) * inv;
                        if (g.needs(gamma.id)) {
                            auto& gg = g.grads(gamma.id);
                            for (int j = 0; j < n; ++j) gg[j] += grow[j] * xhat[j];
                        }
                        if (g.needs(beta.id)) {
                            auto& gb = g.grads(beta.id);
                            for (int j = 0; j < n; ++j) gb[j] += grow[j];
                        }
                        if (g.needs(x.id)) {
                            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                            for (int j = 0; j < n; ++j) {
                                dxhat[j] = grow[j] * vgamma.values[j];
                                mean_dxhat += dxhat[j];
                                mean_dxhat_xhat += dxhat[j] * xhat[j];
                            }
                            mean_dxhat /= n;
                            mean_dxhat_xhat /= n;
                            auto& gx = g.grads(x.id);
                            double* gxrow = &gx[static_cast<size_t>(i) * n];
                            for (int j = 0; j < n; ++j)
                                gxrow[j] += inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                        }
                    }
                });
}

Var Graph::gelu(Var x) {
    return push(num::gelu(value(x)), {x.id}, [x](Graph& g, int self) {
        const auto& vx = g.val(x.id).values;
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * gelu_grad_scalar(vx[i]);
    });
}

Var Graph::concat_rows(Var a, Var b) {
    const int ra = value(a).rows(), cols = value(a).cols(), rb = value(b).rows();
    return push(num::concat_rows(value(a), value(b)), {a.id, b.id},
                [a, b, ra, rb, cols](Graph& g, int self) {
                    const auto& go = g.grad_ro(self);
                    if (g.needs(a.id)) {
                        auto& ga = g.grads(a.id);
                        for (size_t i = 0; i < static_cast<size_t>(ra) * cols; ++i) ga[i] += go[i];
                    }
                    if (g.needs(b.id)) {
                        auto& gb = g.grads(b.id);
                        const size_t off = static_cast<size_t>(ra) * cols;
                        for (size_t i = 0; i < static_cast<size_t>(rb) * cols; ++i) gb[i] += go[off + i];
                    }
                });
}

Var Graph::slice_rows(Var x, int row_begin, int row_end) {
    const int cols = value(x).cols();
    return push(num::slice_rows(value(x), row_begin, row_end), {x.id},
                [x, row_begin, row_end, cols](Graph& g, int self) {
                    const auto& go = g.grad_ro(self);
                    auto& gx = g.grads(x.id);
                    const size_t off = static_cast<size_t>(row_begin) * cols;
                    for (size_t i = 0; i < static_cast<size_t>(row_end - row_begin) * cols; ++i)
                        gx[off + i] += go[i];
                });
}

Var Graph::concat_cols(Var a, Var b) {
    const int rows = value(a).rows(), ca = value(a).cols(), cb = value(b).cols();
    return push(num::concat_cols(value(a), value(b)), {a.id, b.id},
                [a, b, rows, ca, cb](Graph& g, int self) {
                    const auto& go = g.grad_ro(self);
                    const int n = ca + cb;
                    if (g.needs(a.id)) {
                        auto& ga = g.grads(a.id);
                        for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < ca; ++j)
                                ga[static_cast<size_t>(i) * ca + j] += go[static_cast<size_t>(i) * n + j];
                    }
                    if (g.needs(b.id)) {
                        auto& gb = g.grads(b.id);
                        for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < cb; ++j)
                                gb[static_cast<size_t>(i) * cb + j] +=
                                    go[static_cast<size_t>(i) * n + ca + j];
                    }
                });
}

Var Graph::reshape(Var x, std::vector<int> new_shape) {
    return push(num::reshape(value(x), std::move(new_shape)), {x.id}, [x](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
}

Var Graph::add_row_broadcast(Var x, Var bias) {
    const int rows = value(x).rows(), n = value(x).cols();
    return push(num::add_row_broadcast(value(x), value(bias)), {x.id, bias.id},
                [x, bias, rows, n](Graph& g, int self) {
                    const auto& go = g.grad_ro(self);
                    if (g.needs(x.id)) {
                        auto& gx = g.grads(x.id);
                        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
                    }
                    if (g.needs(bias.id)) {
                        auto& gb = g.grads(bias.id);
                        for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < n; ++j) gb[j] += go[static_cast<size_t>(i) * n + j];
                    }
                });
}

Var Graph::gather(Var x, std::vector<int> indices, std::vector<int> out_shape) {
    Tensor out = num::gather(value(x), indices, std::move(out_shape));
    return push(std::move(out), {x.id}, [x, idx = std::move(indices)](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        for (size_t i = 0; i < idx.size(); ++i) gx[static_cast<size_t>(idx[i])] += go[i];
    });
}

Var Graph::normalize_rows(Var x) {
    return push(num::normalize_rows(value(x)), {x.id}, [x](Graph& g, int self) {
        const Tensor& vx = g.val(x.id);
        const Tensor& y = g.val(self);
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        const int rows = vx.rows(), n = vx.cols();
        for (int i = 0; i < rows; ++i) {
            const double* xrow = &vx.values[static_cast<size_t>(i) * n];
            const double* yrow = &y.values[static_cast<size_t>(i) * n];
            const double* grow = &go[static_cast<size_t>(i) * n];
            double sq = 0.0;
            for (int j = 0; j < n; ++j) sq += xrow[j] * xrow[j];
            const double norm = std::sqrt(sq);
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += grow[j] * yrow[j];
            double* gxrow = &gx[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) gxrow[j] += (grow[j] - dot * yrow[j]) / norm;
        }
    });
}

Var Graph::reduce_sum(Var x) {
    Tensor out({1}, {num::reduce_sum(value(x))});
    return push(std::move(out), {x.id}, [x](Graph& g, int self) {
        const double g0 = g.grad_ro(self)[0];
        auto& gx = g.grads(x.id);
        for (double& v : gx) v += g0;
    });
}

Var Graph::reduce_mean(Var x) {
    Tensor out({1}, {num::reduce_mean(value(x))});
    const double inv_n = 1.0 / static_cast<double>(value(x).size());
    return push(std::move(out), {x.id}, [x, inv_n](Graph& g, int self) {
        const double g0 = g.grad_ro(self)[0] * inv_n;
        auto& gx = g.grads(x.id);
        for (double& v : gx) v += g0;
    });
}

Var Graph::sqrt(Var x) {
    Tensor out = value(x);
    for (double& v : out.values) v = std::sqrt(v);
    return push(std::move(out), {x.id}, [x](Graph& g, int self) {
        const auto& vy = g.val(self).values;
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        for (size_t i = 0; i < go.size(); ++i)
            if (vy[i] > 0.0) gx[i] += go[i] * 0.5 / vy[i];
    });
}

Var Graph::log(Var x) {
    Tensor out = value(x);
    for (double& v : out.values) v = std::log(v);
    return push(std::move(out), {x.id}, [x](Graph& g, int self) {
        const auto& vx = g.val(x.id).values;
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] / vx[i];
    });
}

Var Graph::clamp_min(Var x, double floor) {
    Tensor out = value(x);
    for (double& v : out.values) v = std::max(v, floor);
    return push(std::move(out), {x.id}, [x, floor](Graph& g, int self) {
        const auto& vx = g.val(x.id).values;
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        for (size_t i = 0; i < go.size(); ++i)
            if (vx[i] > floor) gx[i] += go[i];
    });
}

namespace {

double scalar_of(const Tensor& t, const char* who) {
    if (t.size() != 1) throw ShapeError(std::string(who) + ": expected single-element tensor");
    return t.values[0];
}

}  // namespace

Var Graph::add_scalar(Var x, Var s) {
    const double sv = scalar_of(value(s), "add_scalar");
    Tensor out = value(x);
    for (double& v : out.values) v += sv;
    return push(std::move(out), {x.id, s.id}, [x, s](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        if (g.needs(x.id)) {
            auto& gx = g.grads(x.id);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        }
        if (g.needs(s.id)) {
            double sum = 0.0;
            for (double v : go) sum += v;
            g.grads(s.id)[0] += sum;
        }
    });
}

Var Graph::sub_scalar(Var x, Var s) {
    const double sv = scalar_of(value(s), "sub_scalar");
    Tensor out = value(x);
    for (double& v : out.values) v -= sv;
    return push(std::move(out), {x.id, s.id}, [x, s](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        if (g.needs(x.id)) {
            auto& gx = g.grads(x.id);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        }
        if (g.needs(s.id)) {
            double sum = 0.0;
            for (double v : go) sum += v;
            g.grads(s.id)[0] -= sum;
        }
    });
}

Var Graph::mul_scalar(Var x, Var s) {
    const double sv = scalar_of(value(s), "mul_scalar");
    Tensor out = value(x);
    for (double& v : out.values) v *= sv;
    return push(std::move(out), {x.id, s.id}, [x, s, sv](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        const auto& vx = g.val(x.id).values;
        if (g.needs(x.id)) {
            auto& gx = g.grads(x.id);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * sv;
        }
        if (g.needs(s.id)) {
            double sum = 0.0;
            for (size_t i = 0; i < go.size(); ++i) sum += go[i] * vx[i];
            g.grads(s.id)[0] += sum;
        }
    });
}

Var Graph::div_scalar(Var x, Var s) {
    const double sv = scalar_of(value(s), "div_scalar");
    Tensor out = value(x);
    for (double& v : out.values) v /= sv;
    return push(std::move(out), {x.id, s.id}, [x, s, sv](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        const auto& vy = g.val(self).values;
        if (g.needs(x.id)) {
            auto& gx = g.grads(x.id);
            for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] / sv;
        }
        if (g.needs(s.id)) {
            double sum = 0.0;
            for (size_t i = 0; i < go.size(); ++i) sum += go[i] * vy[i];
            g.grads(s.id)[0] -= sum / sv;
        }
    });
}

Var Graph::dropout(Var x, double p, CounterRng& rng) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw ConfigError("dropout: rate must be below 1");
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor out = value(x);
    std::vector<double> mask(out.values.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
        out.values[i] *= mask[i];
    }
    return push(std::move(out), {x.id}, [x, mask = std::move(mask)](Graph& g, int self) {
        const auto& go = g.grad_ro(self);
        auto& gx = g.grads(x.id);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    });
}

Var Graph::mse_against(Var pred, const Tensor& target) {
    Var tgt = constant(target);
    Var diff = sub(pred, tgt);
    return reduce_mean(mul(diff, diff));
}

Var Graph::custom(Tensor value, std::vector<Var> parents, BackwardFn back) {
    std::vector<int> pids;
    pids.reserve(parents.size());
    for (Var p : parents) pids.push_back(p.id);
    return push(std::move(value), std::move(pids), std::move(back));
}

}  // namespace seqcomp::num
