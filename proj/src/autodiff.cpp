#include "textguard/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "textguard/numeric.hpp"

namespace textguard::autodiff {

using numeric::Tensor;

int Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw std::logic_error("tape: invalid node handle");
    }
    return nodes_[v.id];
}

Tensor& Tape::grad_ref(int id) {
    Node& n = nodes_[id];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    numeric::add_into(grad_ref(id), g);
}

Var Tape::constant(Tensor value) {
    return Var{push(std::move(value), false, nullptr)};
}

Var Tape::param(Tensor* storage) {
    auto it = param_nodes_.find(storage);
    if (it != param_nodes_.end()) return Var{it->second};
    int id = push(*storage, true, nullptr);
    param_nodes_[storage] = id;
    return Var{id};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    Tensor out = numeric::matmul(av, bv);
    bool rg = node(a).requires_grad || node(b).requires_grad;
    int ia = a.id, ib = b.id;
    int id = push(std::move(out), rg, [ia, ib](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& av = t.nodes_[ia].value;
        const Tensor& bv = t.nodes_[ib].value;
        if (t.nodes_[ia].requires_grad) {
            t.accumulate(ia, numeric::matmul(g, numeric::transpose(bv)));
        }
        if (t.nodes_[ib].requires_grad) {
            t.accumulate(ib, numeric::matmul(numeric::transpose(av), g));
        }
    });
    return Var{id};
}

Var Tape::add(Var a, Var b) {
    Tensor out = numeric::add(node(a).value, node(b).value);
    bool rg = node(a).requires_grad || node(b).requires_grad;
    int ia = a.id, ib = b.id;
    int id = push(std::move(out), rg, [ia, ib](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
    return Var{id};
}

Var Tape::add_row(Var a, Var bias) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(bias).value;
    if (av.rank() != 2 || bv.rank() != 1 || av.cols() != bv.dim(0)) {
        throw std::invalid_argument("add_row: need (m x n) and bias (n)");
    }
    Tensor out = av;
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) += bv(j);
    }
    bool rg = node(a).requires_grad || node(bias).requires_grad;
    int ia = a.id, ib = bias.id;
    int id = push(std::move(out), rg, [ia, ib](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        t.accumulate(ia, g);
        if (t.nodes_[ib].requires_grad) {
            Tensor colsum({g.cols()});
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) colsum(j) += g(i, j);
            }
            t.accumulate(ib, colsum);
        }
    });
    return Var{id};
}

Var Tape::mul(Var a, Var b) {
    Tensor out = numeric::hadamard(node(a).value, node(b).value);
    bool rg = node(a).requires_grad || node(b).requires_grad;
    int ia = a.id, ib = b.id;
    int id = push(std::move(out), rg, [ia, ib](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.nodes_[ia].requires_grad) t.accumulate(ia, numeric::hadamard(g, t.nodes_[ib].value));
        if (t.nodes_[ib].requires_grad) t.accumulate(ib, numeric::hadamard(g, t.nodes_[ia].value));
    });
    return Var{id};
}

Var Tape::scale(Var a, double s) {
    Tensor out = numeric::scale(node(a).value, s);
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia, s](Tape& t, int self) {
        t.accumulate(ia, numeric::scale(t.nodes_[self].grad, s));
    });
    return Var{id};
}

Var Tape::mul_const(Var a, Tensor c) {
    Tensor out = numeric::hadamard(node(a).value, c);
    int ia = a.id;
    auto cc = std::make_shared<Tensor>(std::move(c));
    int id = push(std::move(out), node(a).requires_grad, [ia, cc](Tape& t, int self) {
        t.accumulate(ia, numeric::hadamard(t.nodes_[self].grad, *cc));
    });
    return Var{id};
}

Var Tape::scale_rows(Var a, Tensor row_factors) {
    const Tensor& av = node(a).value;
    if (av.rank() != 2 || row_factors.rank() != 1 || row_factors.dim(0) != av.rows()) {
        throw std::invalid_argument("scale_rows: need (m x n) and factors (m)");
    }
    Tensor out = av;
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double f = row_factors(i);
        for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) *= f;
    }
    int ia = a.id;
    auto fac = std::make_shared<Tensor>(std::move(row_factors));
    int id = push(std::move(out), node(a).requires_grad, [ia, fac](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            double f = (*fac)(i);
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) *= f;
        }
        t.accumulate(ia, ga);
    });
    return Var{id};
}

Var Tape::sigmoid(Var a) {
    Tensor out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) = numeric::sigmoid(out.flat(i));
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.flat(i) *= y.flat(i) * (1.0 - y.flat(i));
        t.accumulate(ia, ga);
    });
    return Var{id};
}

Var Tape::tanh(Var a) {
    Tensor out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) = std::tanh(out.flat(i));
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.flat(i) *= 1.0 - y.flat(i) * y.flat(i);
        t.accumulate(ia, ga);
    });
    return Var{id};
}

Var Tape::relu(Var a) {
    Tensor out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) = out.flat(i) > 0.0 ? out.flat(i) : 0.0;
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& x = t.nodes_[ia].value;
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            if (x.flat(i) <= 0.0) ga.flat(i) = 0.0;
        }
        t.accumulate(ia, ga);
    });
    return Var{id};
}

Var Tape::gelu(Var a) {
    Tensor out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) = numeric::gelu(out.flat(i));
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& x = t.nodes_[ia].value;
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.flat(i) *= numeric::gelu_derivative(x.flat(i));
        t.accumulate(ia, ga);
    });
    return Var{id};
}

Var Tape::softmax_rows_masked(Var a, Tensor mask) {
    const Tensor& av = node(a).value;
    if (av.rank() != 2 || !mask.same_shape(av)) {
        throw std::invalid_argument("softmax_rows_masked: mask must match (m x n) input");
    }
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < av.cols(); ++j) {
            if (mask(i, j) != 0.0) mx = std::max(mx, av(i, j));
        }
        if (!std::isfinite(mx)) continue;  // fully masked row stays zero
        double sum = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            if (mask(i, j) != 0.0) {
                out(i, j) = std::exp(av(i, j) - mx);
                sum += out(i, j);
            }
        }
        for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) /= sum;
    }
    int ia = a.id;
    auto mk = std::make_shared<Tensor>(std::move(mask));
    int id = push(std::move(out), node(a).requires_grad, [ia, mk](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor ga(g.shape());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j) {
                if ((*mk)(i, j) != 0.0) ga(i, j) = y(i, j) * (g(i, j) - dot);
            }
        }
        t.accumulate(ia, ga);
    });
    return Var{id};
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = node(x).value;
    const Tensor& gv = node(gain).value;
    const Tensor& bv = node(bias).value;
    if (xv.rank() != 2 || gv.rank() != 1 || bv.rank() != 1 || gv.dim(0) != xv.cols() ||
        bv.dim(0) != xv.cols()) {
        throw std::invalid_argument("layer_norm_rows: need (m x n), gain (n), bias (n)");
    }
    std::size_t m = xv.rows(), n = xv.cols();
    auto normed = std::make_shared<Tensor>(Tensor({m, n}));
    auto inv_std = std::make_shared<Tensor>(Tensor({m}));
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xv(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double d = xv(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)(i) = is;
        for (std::size_t j = 0; j < n; ++j) {
            double y = (xv(i, j) - mean) * is;
            (*normed)(i, j) = y;
            out(i, j) = y * gv(j) + bv(j);
        }
    }
    bool rg = node(x).requires_grad || node(gain).requires_grad || node(bias).requires_grad;
    int ix = x.id, ig = gain.id, ib = bias.id;
    int id = push(std::move(out), rg, [ix, ig, ib, normed, inv_std](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& gv = t.nodes_[ig].value;
        std::size_t m = g.rows(), n = g.cols();
        if (t.nodes_[ig].requires_grad) {
            Tensor dg({n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) dg(j) += g(i, j) * (*normed)(i, j);
            t.accumulate(ig, dg);
        }
        if (t.nodes_[ib].requires_grad) {
            Tensor db({n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) db(j) += g(i, j);
            t.accumulate(ib, db);
        }
        if (t.nodes_[ix].requires_grad) {
            Tensor dx({m, n});
            for (std::size_t i = 0; i < m; ++i) {
                double mean_t = 0.0, mean_ty = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    double tj = g(i, j) * gv(j);
                    mean_t += tj;
                    mean_ty += tj * (*normed)(i, j);
                }
                mean_t /= static_cast<double>(n);
                mean_ty /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    double tj = g(i, j) * gv(j);
                    dx(i, j) = (tj - mean_t - (*normed)(i, j) * mean_ty) * (*inv_std)(i);
                }
            }
            t.accumulate(ix, dx);
        }
    });
    return Var{id};
}

Var Tape::transpose(Var a) {
    Tensor out = numeric::transpose(node(a).value);
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia](Tape& t, int self) {
        t.accumulate(ia, numeric::transpose(t.nodes_[self].grad));
    });
    return Var{id};
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
    const Tensor& av = node(a).value;
    if (av.rank() != 2 || r0 > r1 || r1 > av.rows()) {
        throw std::invalid_argument("slice_rows: bad range");
    }
    Tensor out({r1 - r0, av.cols()});
    for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out(i - r0, j) = av(i, j);
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia, r0](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (!t.nodes_[ia].requires_grad) return;
        Tensor& dst = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) dst(i + r0, j) += g(i, j);
    });
    return Var{id};
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
    const Tensor& av = node(a).value;
    if (av.rank() != 2 || c0 > c1 || c1 > av.cols()) {
        throw std::invalid_argument("slice_cols: bad range");
    }
    Tensor out({av.rows(), c1 - c0});
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = av(i, j);
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia, c0](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (!t.nodes_[ia].requires_grad) return;
        Tensor& dst = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) dst(i, j + c0) += g(i, j);
    });
    return Var{id};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    std::size_t rows = 0, cols = node(parts[0]).value.cols();
    bool rg = false;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        if (v.rank() != 2 || v.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += v.rows();
        rg = rg || node(p).requires_grad;
    }
    Tensor out({rows, cols});
    std::size_t r = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        offsets.push_back(r);
        ids.push_back(p.id);
        for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t j = 0; j < cols; ++j) out(r + i, j) = v(i, j);
        r += v.rows();
    }
    int id = push(std::move(out), rg, [ids, offsets](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.nodes_[ids[k]].requires_grad) continue;
            Tensor& dst = t.grad_ref(ids[k]);
            for (std::size_t i = 0; i < dst.rows(); ++i)
                for (std::size_t j = 0; j < dst.cols(); ++j) dst(i, j) += g(offsets[k] + i, j);
        }
    });
    return Var{id};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    std::size_t cols = 0, rows = node(parts[0]).value.rows();
    bool rg = false;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        if (v.rank() != 2 || v.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += v.cols();
        rg = rg || node(p).requires_grad;
    }
    Tensor out({rows, cols});
    std::size_t c = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        offsets.push_back(c);
        ids.push_back(p.id);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) out(i, c + j) = v(i, j);
        c += v.cols();
    }
    int id = push(std::move(out), rg, [ids, offsets](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.nodes_[ids[k]].requires_grad) continue;
            Tensor& dst = t.grad_ref(ids[k]);
            for (std::size_t i = 0; i < dst.rows(); ++i)
                for (std::size_t j = 0; j < dst.cols(); ++j) dst(i, j) += g(i, offsets[k] + j);
        }
    });
    return Var{id};
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> indices) {
    const Tensor& tv = node(table).value;
    if (tv.rank() != 2) throw std::invalid_argument("gather_rows: table must be rank 2");
    for (std::size_t idx : indices) {
        if (idx >= tv.rows()) throw std::out_of_range("gather_rows: index out of range");
    }
    Tensor out({indices.size(), tv.cols()});
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t j = 0; j < tv.cols(); ++j) out(i, j) = tv(indices[i], j);
    int it = table.id;
    auto idxs = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    int id = push(std::move(out), node(table).requires_grad, [it, idxs](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (!t.nodes_[it].requires_grad) return;
        Tensor& dst = t.grad_ref(it);
        for (std::size_t i = 0; i < idxs->size(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) dst((*idxs)[i], j) += g(i, j);
    });
    return Var{id};
}

Var Tape::mean_all(Var a) {
    const Tensor& av = node(a).value;
    if (av.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
    double sum = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) sum += av.flat(i);
    Tensor out = Tensor::scalar(sum / static_cast<double>(av.size()));
    int ia = a.id;
    int id = push(std::move(out), node(a).requires_grad, [ia](Tape& t, int self) {
        double g = t.nodes_[self].grad.flat(0);
        const Tensor& av = t.nodes_[ia].value;
        Tensor ga(av.shape());
        double per = g / static_cast<double>(av.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga.flat(i) = per;
        t.accumulate(ia, ga);
    });
    return Var{id};
}

Var Tape::bce_loss(Var probs, Tensor targets) {
    const Tensor& pv = node(probs).value;
    if (!pv.same_shape(targets)) throw std::invalid_argument("bce_loss: shape mismatch");
    double loss = numeric::binary_cross_entropy(pv, targets);
    int ip = probs.id;
    auto y = std::make_shared<Tensor>(std::move(targets));
    int id = push(Tensor::scalar(loss), node(probs).requires_grad, [ip, y](Tape& t, int self) {
        double g = t.nodes_[self].grad.flat(0);
        const Tensor& p = t.nodes_[ip].value;
        Tensor gp(p.shape());
        double n = static_cast<double>(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            double pi = p.flat(i);
            // clamped region has zero derivative, matching the forward clamp
            if (pi <= numeric::kBceClamp || pi >= 1.0 - numeric::kBceClamp) continue;
            gp.flat(i) = g * (pi - y->flat(i)) / (pi * (1.0 - pi)) / n;
        }
        t.accumulate(ip, gp);
    });
    return Var{id};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) {
    Node& n = nodes_[v.id];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (ran_backward_) throw std::logic_error("tape: backward already ran");
    ran_backward_ = true;
    const Node& ln = node(loss);
    if (ln.value.size() != 1) throw std::invalid_argument("backward: loss must be a scalar node");
    grad_ref(loss.id).flat(0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.grad_alloc || !n.back) continue;
        n.back(*this, i);
    }
}

Tensor Tape::grad_for(const Tensor* storage) {
    auto it = param_nodes_.find(storage);
    if (it == param_nodes_.end() || !nodes_[it->second].grad_alloc) {
        return Tensor::zeros(storage->shape());
    }
    return nodes_[it->second].grad;
}

}  // namespace textguard::autodiff
