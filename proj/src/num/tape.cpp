#include "num/tape.hpp"

#include "common/error.hpp"
#include "num/ops.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace attnmix::num {

namespace {
using BackFn = std::function<void(Tape&, int32_t)>;
}

ValueRef Tape::push(Tensor val, bool requires_grad, BackFn back) {
    Node n;
    n.val = std::move(val);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return ValueRef{static_cast<int32_t>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int32_t i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.val.shape.empty() ? std::vector<int64_t>{} : n.val.shape);
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::check(ValueRef r, const char* op) const {
    if (!r.valid() || r.idx >= static_cast<int32_t>(nodes_.size()))
        raise(Errc::invalid_argument, std::string(op) + ": dangling value reference");
}

ValueRef Tape::input(Tensor t) {
    return push(std::move(t), false, {});
}

ValueRef Tape::param(Tensor t) {
    return push(std::move(t), true, {});
}

const Tensor& Tape::value(ValueRef r) const {
    check(r, "value");
    return nodes_[static_cast<size_t>(r.idx)].val;
}

Tensor Tape::gradient(ValueRef r) const {
    check(r, "gradient");
    const Node& n = nodes_[static_cast<size_t>(r.idx)];
    if (n.grad_alloc) return n.grad;
    return Tensor::zeros(n.val.shape.empty() ? std::vector<int64_t>{} : n.val.shape);
}

ValueRef Tape::add(ValueRef a, ValueRef b) {
    check(a, "add");
    check(b, "add");
    const Tensor& A = val(a.idx);
    const Tensor& B = val(b.idx);
    if (!A.same_shape(B))
        raise(Errc::invalid_argument, "add shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += B.v[i];
    bool rg = needs(a) || needs(b);
    int32_t ia = a.idx, ib = b.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, ib](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
        }
        if (t.nodes_[static_cast<size_t>(ib)].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i];
        }
    });
}

ValueRef Tape::sub(ValueRef a, ValueRef b) {
    check(a, "sub");
    check(b, "sub");
    const Tensor& A = val(a.idx);
    const Tensor& B = val(b.idx);
    if (!A.same_shape(B))
        raise(Errc::invalid_argument, "sub shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= B.v[i];
    bool rg = needs(a) || needs(b);
    int32_t ia = a.idx, ib = b.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, ib](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
        }
        if (t.nodes_[static_cast<size_t>(ib)].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] -= g.v[i];
        }
    });
}

ValueRef Tape::mul(ValueRef a, ValueRef b) {
    check(a, "mul");
    check(b, "mul");
    const Tensor& A = val(a.idx);
    const Tensor& B = val(b.idx);
    if (!A.same_shape(B))
        raise(Errc::invalid_argument, "mul shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= B.v[i];
    bool rg = needs(a) || needs(b);
    int32_t ia = a.idx, ib = b.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, ib](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A2 = t.val(ia);
        const Tensor& B2 = t.val(ib);
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * B2.v[i];
        }
        if (t.nodes_[static_cast<size_t>(ib)].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i] * A2.v[i];
        }
    });
}

ValueRef Tape::scale(ValueRef a, double c) {
    check(a, "scale");
    Tensor out = val(a.idx);
    for (double& x : out.v) x *= c;
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, c](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += c * g.v[i];
    });
}

ValueRef Tape::add_scalar(ValueRef a, double c) {
    check(a, "add_scalar");
    Tensor out = val(a.idx);
    for (double& x : out.v) x += c;
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    });
}

ValueRef Tape::exp(ValueRef a) {
    check(a, "exp");
    Tensor out = val(a.idx);
    for (double& x : out.v) x = std::exp(x);
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].val;
        Tensor& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * y.v[i];
    });
}

ValueRef Tape::log(ValueRef a) {
    check(a, "log");
    Tensor out = val(a.idx);
    for (double& x : out.v) x = std::log(x);
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x = t.val(ia);
        Tensor& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] / x.v[i];
    });
}

ValueRef Tape::sqrt(ValueRef a) {
    check(a, "sqrt");
    Tensor out = val(a.idx);
    for (double& x : out.v) x = std::sqrt(x);
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].val;
        Tensor& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i)
            if (y.v[i] != 0.0) ga.v[i] += 0.5 * g.v[i] / y.v[i];
    });
}

ValueRef Tape::pow_scalar(ValueRef a, double p) {
    check(a, "pow_scalar");
    const Tensor& A = val(a.idx);
    bool integral = p == std::floor(p);
    if (!integral)
        for (double x : A.v)
            if (x < 0.0) raise(Errc::invalid_argument, "pow_scalar with fractional exponent needs nonnegative input");
    Tensor out = A;
    for (double& x : out.v) x = std::pow(x, p);
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, p](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x = t.val(ia);
        Tensor& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i) {
            double d;
            if (p == 1.0) d = 1.0;
            else if (x.v[i] == 0.0) d = p > 1.0 ? 0.0 : 0.0;
            else d = p * std::pow(x.v[i], p - 1.0);
            ga.v[i] += g.v[i] * d;
        }
    });
}

ValueRef Tape::clamp_min(ValueRef a, double c) {
    check(a, "clamp_min");
    Tensor out = val(a.idx);
    for (double& x : out.v) x = x < c ? c : x;
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, c](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& x = t.val(ia);
        Tensor& ga = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i)
            if (x.v[i] >= c) ga.v[i] += g.v[i];
    });
}

ValueRef Tape::sum(ValueRef a) {
    check(a, "sum");
    const Tensor& A = val(a.idx);
    double s = 0.0;
    for (double x : A.v) s += x;
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(Tensor::scalar(s), rg, !rg ? BackFn{} : [ia](Tape& t, int32_t self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
        Tensor& ga = t.grad_buf(ia);
        for (double& x : ga.v) x += g;
    });
}

ValueRef Tape::dot(ValueRef a, ValueRef b) {
    check(a, "dot");
    check(b, "dot");
    const Tensor& A = val(a.idx);
    const Tensor& B = val(b.idx);
    if (!A.same_shape(B))
        raise(Errc::invalid_argument, "dot shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < A.v.size(); ++i) s += A.v[i] * B.v[i];
    bool rg = needs(a) || needs(b);
    int32_t ia = a.idx, ib = b.idx;
    return push(Tensor::scalar(s), rg, !rg ? BackFn{} : [ia, ib](Tape& t, int32_t self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
        const Tensor& A2 = t.val(ia);
        const Tensor& B2 = t.val(ib);
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g * B2.v[i];
        }
        if (t.nodes_[static_cast<size_t>(ib)].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += g * A2.v[i];
        }
    });
}

ValueRef Tape::pick(ValueRef a, int64_t i) {
    check(a, "pick");
    const Tensor& A = val(a.idx);
    if (A.rank() != 1 || i < 0 || i >= A.shape[0])
        raise(Errc::invalid_argument, "pick index out of range");
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(Tensor::scalar(A.at(i)), rg, !rg ? BackFn{} : [ia, i](Tape& t, int32_t self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
        t.grad_buf(ia).at(i) += g;
    });
}

ValueRef Tape::row(ValueRef a, int64_t i) {
    check(a, "row");
    const Tensor& A = val(a.idx);
    if (A.rank() != 2 || i < 0 || i >= A.rows())
        raise(Errc::invalid_argument, "row index out of range");
    int64_t d = A.cols();
    Tensor out = Tensor::zeros({d});
    for (int64_t j = 0; j < d; ++j) out.at(j) = A.at(i, j);
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, i, d](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int64_t j = 0; j < d; ++j) ga.at(i, j) += g.at(j);
    });
}

ValueRef Tape::mean_of(std::span<const ValueRef> scalars) {
    if (scalars.empty()) raise(Errc::invalid_argument, "mean_of needs at least one value");
    std::vector<int32_t> ids;
    ids.reserve(scalars.size());
    double s = 0.0;
    bool rg = false;
    for (ValueRef r : scalars) {
        check(r, "mean_of");
        const Tensor& x = val(r.idx);
        if (x.numel() != 1) raise(Errc::invalid_argument, "mean_of expects scalars");
        s += x.v[0];
        rg = rg || needs(r);
        ids.push_back(r.idx);
    }
    double inv = 1.0 / static_cast<double>(scalars.size());
    return push(Tensor::scalar(s * inv), rg, !rg ? BackFn{} : [ids, inv](Tape& t, int32_t self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.v[0] * inv;
        for (int32_t id : ids)
            if (t.nodes_[static_cast<size_t>(id)].requires_grad) t.grad_buf(id).v[0] += g;
    });
}

ValueRef Tape::matmul(ValueRef a, ValueRef b) {
    check(a, "matmul");
    check(b, "matmul");
    const Tensor& A = val(a.idx);
    const Tensor& B = val(b.idx);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
        raise(Errc::invalid_argument, "matmul shape mismatch " + A.shape_str() + " x " + B.shape_str());
    int64_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t l = 0; l < k; ++l) s += A.at(i, l) * B.at(l, j);
            out.at(i, j) = s;
        }
    bool rg = needs(a) || needs(b);
    int32_t ia = a.idx, ib = b.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, ib, m, k, n](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A2 = t.val(ia);
        const Tensor& B2 = t.val(ib);
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t l = 0; l < k; ++l) {
                    double s = 0.0;
                    for (int64_t j = 0; j < n; ++j) s += g.at(i, j) * B2.at(l, j);
                    ga.at(i, l) += s;
                }
        }
        if (t.nodes_[static_cast<size_t>(ib)].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (int64_t l = 0; l < k; ++l)
                for (int64_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int64_t i = 0; i < m; ++i) s += A2.at(i, l) * g.at(i, j);
                    gb.at(l, j) += s;
                }
        }
    });
}

ValueRef Tape::matmul_nt(ValueRef a, ValueRef b) {
    check(a, "matmul_nt");
    check(b, "matmul_nt");
    const Tensor& A = val(a.idx);
    const Tensor& B = val(b.idx);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols())
        raise(Errc::invalid_argument, "matmul_nt shape mismatch " + A.shape_str() + " x " + B.shape_str());
    int64_t m = A.rows(), k = A.cols(), n = B.rows();
    Tensor out = Tensor::zeros({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t l = 0; l < k; ++l) s += A.at(i, l) * B.at(j, l);
            out.at(i, j) = s;
        }
    bool rg = needs(a) || needs(b);
    int32_t ia = a.idx, ib = b.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, ib, m, k, n](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A2 = t.val(ia);
        const Tensor& B2 = t.val(ib);
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t l = 0; l < k; ++l) {
                    double s = 0.0;
                    for (int64_t j = 0; j < n; ++j) s += g.at(i, j) * B2.at(j, l);
                    ga.at(i, l) += s;
                }
        }
        if (t.nodes_[static_cast<size_t>(ib)].requires_grad) {
            Tensor& gb = t.grad_buf(ib);
            for (int64_t j = 0; j < n; ++j)
                for (int64_t l = 0; l < k; ++l) {
                    double s = 0.0;
                    for (int64_t i = 0; i < m; ++i) s += g.at(i, j) * A2.at(i, l);
                    gb.at(j, l) += s;
                }
        }
    });
}

ValueRef Tape::matvec(ValueRef a, ValueRef x) {
    check(a, "matvec");
    check(x, "matvec");
    const Tensor& A = val(a.idx);
    const Tensor& X = val(x.idx);
    if (A.rank() != 2 || X.rank() != 1 || A.cols() != X.shape[0])
        raise(Errc::invalid_argument, "matvec shape mismatch " + A.shape_str() + " x " + X.shape_str());
    int64_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros({m});
    for (int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += A.at(i, j) * X.at(j);
        out.at(i) = s;
    }
    bool rg = needs(a) || needs(x);
    int32_t ia = a.idx, ix = x.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, ix, m, n](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A2 = t.val(ia);
        const Tensor& X2 = t.val(ix);
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) ga.at(i, j) += g.at(i) * X2.at(j);
        }
        if (t.nodes_[static_cast<size_t>(ix)].requires_grad) {
            Tensor& gx = t.grad_buf(ix);
            for (int64_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (int64_t i = 0; i < m; ++i) s += A2.at(i, j) * g.at(i);
                gx.at(j) += s;
            }
        }
    });
}

ValueRef Tape::vecmat(ValueRef x, ValueRef a) {
    check(x, "vecmat");
    check(a, "vecmat");
    const Tensor& X = val(x.idx);
    const Tensor& A = val(a.idx);
    if (X.rank() != 1 || A.rank() != 2 || A.rows() != X.shape[0])
        raise(Errc::invalid_argument, "vecmat shape mismatch " + X.shape_str() + " x " + A.shape_str());
    int64_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros({n});
    for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < m; ++i) s += X.at(i) * A.at(i, j);
        out.at(j) = s;
    }
    bool rg = needs(x) || needs(a);
    int32_t ix = x.idx, ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ix, ia, m, n](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& X2 = t.val(ix);
        const Tensor& A2 = t.val(ia);
        if (t.nodes_[static_cast<size_t>(ix)].requires_grad) {
            Tensor& gx = t.grad_buf(ix);
            for (int64_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (int64_t j = 0; j < n; ++j) s += A2.at(i, j) * g.at(j);
                gx.at(i) += s;
            }
        }
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) ga.at(i, j) += X2.at(i) * g.at(j);
        }
    });
}

ValueRef Tape::concat(std::span<const ValueRef> vs) {
    if (vs.empty()) raise(Errc::invalid_argument, "concat of nothing");
    int64_t total = 0;
    bool rg = false;
    std::vector<int32_t> ids;
    std::vector<int64_t> dims;
    for (ValueRef r : vs) {
        check(r, "concat");
        const Tensor& x = val(r.idx);
        if (x.rank() != 1) raise(Errc::invalid_argument, "concat expects rank-1 pieces");
        total += x.shape[0];
        rg = rg || needs(r);
        ids.push_back(r.idx);
        dims.push_back(x.shape[0]);
    }
    Tensor out = Tensor::zeros({total});
    int64_t off = 0;
    for (ValueRef r : vs) {
        const Tensor& x = val(r.idx);
        for (int64_t i = 0; i < x.shape[0]; ++i) out.at(off + i) = x.at(i);
        off += x.shape[0];
    }
    return push(std::move(out), rg, !rg ? BackFn{} : [ids, dims](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        int64_t off2 = 0;
        for (size_t k = 0; k < ids.size(); ++k) {
            if (t.nodes_[static_cast<size_t>(ids[k])].requires_grad) {
                Tensor& gp = t.grad_buf(ids[k]);
                for (int64_t i = 0; i < dims[k]; ++i) gp.at(i) += g.at(off2 + i);
            }
            off2 += dims[k];
        }
    });
}

ValueRef Tape::stack_rows(std::span<const ValueRef> vs) {
    if (vs.empty()) raise(Errc::invalid_argument, "stack_rows of nothing");
    const Tensor& first = val(vs[0].idx);
    if (first.rank() != 1) raise(Errc::invalid_argument, "stack_rows expects rank-1 pieces");
    int64_t d = first.shape[0];
    bool rg = false;
    std::vector<int32_t> ids;
    for (ValueRef r : vs) {
        check(r, "stack_rows");
        const Tensor& x = val(r.idx);
        if (x.rank() != 1 || x.shape[0] != d)
            raise(Errc::invalid_argument, "stack_rows pieces must share one dimension");
        rg = rg || needs(r);
        ids.push_back(r.idx);
    }
    int64_t k = static_cast<int64_t>(vs.size());
    Tensor out = Tensor::zeros({k, d});
    for (int64_t r = 0; r < k; ++r) {
        const Tensor& x = val(vs[static_cast<size_t>(r)].idx);
        for (int64_t j = 0; j < d; ++j) out.at(r, j) = x.at(j);
    }
    return push(std::move(out), rg, !rg ? BackFn{} : [ids, d](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        for (size_t r = 0; r < ids.size(); ++r) {
            if (!t.nodes_[static_cast<size_t>(ids[r])].requires_grad) continue;
            Tensor& gp = t.grad_buf(ids[r]);
            for (int64_t j = 0; j < d; ++j) gp.at(j) += g.at(static_cast<int64_t>(r), j);
        }
    });
}

ValueRef Tape::as_row(ValueRef v) {
    check(v, "as_row");
    const Tensor& X = val(v.idx);
    if (X.rank() != 1) raise(Errc::invalid_argument, "as_row expects rank-1");
    Tensor out = Tensor::zeros({1, X.shape[0]});
    out.v = X.v;
    bool rg = needs(v);
    int32_t iv = v.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [iv](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& gv = t.grad_buf(iv);
        for (size_t i = 0; i < g.v.size(); ++i) gv.v[i] += g.v[i];
    });
}

ValueRef Tape::as_vec(ValueRef m) {
    check(m, "as_vec");
    const Tensor& X = val(m.idx);
    if (X.rank() != 2 || X.rows() != 1) raise(Errc::invalid_argument, "as_vec expects a 1-row matrix");
    Tensor out = Tensor::zeros({X.cols()});
    out.v = X.v;
    bool rg = needs(m);
    int32_t im = m.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [im](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& gm = t.grad_buf(im);
        for (size_t i = 0; i < g.v.size(); ++i) gm.v[i] += g.v[i];
    });
}

ValueRef Tape::gather_rows(ValueRef table, std::vector<int32_t> indices) {
    check(table, "gather_rows");
    const Tensor& T = val(table.idx);
    if (T.rank() != 2) raise(Errc::invalid_argument, "gather_rows expects a rank-2 table");
    int64_t rows = T.rows(), d = T.cols();
    for (int32_t ix : indices)
        if (ix < 0 || ix >= rows)
            raise(Errc::invalid_argument, "gather_rows index " + std::to_string(ix) + " out of range");
    int64_t k = static_cast<int64_t>(indices.size());
    Tensor out = Tensor::zeros({k, d});
    for (int64_t r = 0; r < k; ++r)
        for (int64_t j = 0; j < d; ++j) out.at(r, j) = T.at(indices[static_cast<size_t>(r)], j);
    bool rg = needs(table);
    int32_t it = table.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [it, indices = std::move(indices), d](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& gt = t.grad_buf(it);
        for (size_t r = 0; r < indices.size(); ++r)
            for (int64_t j = 0; j < d; ++j) gt.at(indices[r], j) += g.at(static_cast<int64_t>(r), j);
    });
}

ValueRef Tape::sum_rows_range(ValueRef a, int64_t lo, int64_t hi) {
    check(a, "sum_rows_range");
    const Tensor& A = val(a.idx);
    if (A.rank() != 2 || lo < 0 || hi > A.rows() || lo >= hi)
        raise(Errc::invalid_argument, "sum_rows_range bad range");
    int64_t d = A.cols();
    Tensor out = Tensor::zeros({d});
    for (int64_t r = lo; r < hi; ++r)
        for (int64_t j = 0; j < d; ++j) out.at(j) += A.at(r, j);
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, lo, hi, d](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int64_t r = lo; r < hi; ++r)
            for (int64_t j = 0; j < d; ++j) ga.at(r, j) += g.at(j);
    });
}

ValueRef Tape::concat_rows_range(ValueRef a, int64_t lo, int64_t hi) {
    check(a, "concat_rows_range");
    const Tensor& A = val(a.idx);
    if (A.rank() != 2 || lo < 0 || hi > A.rows() || lo >= hi)
        raise(Errc::invalid_argument, "concat_rows_range bad range");
    int64_t d = A.cols();
    Tensor out = Tensor::zeros({(hi - lo) * d});
    for (int64_t r = lo; r < hi; ++r)
        for (int64_t j = 0; j < d; ++j) out.at((r - lo) * d + j) = A.at(r, j);
    bool rg = needs(a);
    int32_t ia = a.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ia, lo, hi, d](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_buf(ia);
        for (int64_t r = lo; r < hi; ++r)
            for (int64_t j = 0; j < d; ++j) ga.at(r, j) += g.at((r - lo) * d + j);
    });
}

ValueRef Tape::l2_normalize(ValueRef v) {
    check(v, "l2_normalize");
    const Tensor& X = val(v.idx);
    if (X.rank() != 1) raise(Errc::invalid_argument, "l2_normalize expects rank-1");
    Tensor out = Tensor::zeros({X.shape[0]});
    double norm = kernel::l2_normalize(X.v, out.v);
    bool rg = needs(v);
    int32_t iv = v.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [iv, norm](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].val;
        Tensor& gv = t.grad_buf(iv);
        double dy = 0.0;
        for (size_t i = 0; i < g.v.size(); ++i) dy += g.v[i] * y.v[i];
        for (size_t i = 0; i < g.v.size(); ++i) gv.v[i] += (g.v[i] - y.v[i] * dy) / norm;
    });
}

ValueRef Tape::l2_normalize_rows(ValueRef m) {
    check(m, "l2_normalize_rows");
    const Tensor& X = val(m.idx);
    if (X.rank() != 2) raise(Errc::invalid_argument, "l2_normalize_rows expects rank-2");
    int64_t rows = X.rows(), d = X.cols();
    Tensor out = Tensor::zeros({rows, d});
    std::vector<double> norms(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        std::span<const double> in(X.v.data() + r * d, static_cast<size_t>(d));
        std::span<double> o(out.v.data() + r * d, static_cast<size_t>(d));
        norms[static_cast<size_t>(r)] = kernel::l2_normalize(in, o);
    }
    bool rg = needs(m);
    int32_t im = m.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [im, norms = std::move(norms), rows, d](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& y = t.nodes_[static_cast<size_t>(self)].val;
        Tensor& gm = t.grad_buf(im);
        for (int64_t r = 0; r < rows; ++r) {
            double dy = 0.0;
            for (int64_t j = 0; j < d; ++j) dy += g.at(r, j) * y.at(r, j);
            double inv = 1.0 / norms[static_cast<size_t>(r)];
            for (int64_t j = 0; j < d; ++j) gm.at(r, j) += (g.at(r, j) - y.at(r, j) * dy) * inv;
        }
    });
}

ValueRef Tape::softmax(ValueRef x, double sm_scale) {
    check(x, "softmax");
    const Tensor& X = val(x.idx);
    if (X.rank() != 1) raise(Errc::invalid_argument, "softmax expects rank-1");
    if (!(sm_scale > 0.0)) raise(Errc::invalid_argument, "softmax scale must be > 0");
    Tensor out = Tensor::zeros({X.shape[0]});
    kernel::softmax(X.v, sm_scale, out.v);
    bool rg = needs(x);
    int32_t ix = x.idx;
    return push(std::move(out), rg, !rg ? BackFn{} : [ix, sm_scale](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& p = t.nodes_[static_cast<size_t>(self)].val;
        Tensor& gx = t.grad_buf(ix);
        double dotpg = 0.0;
        for (size_t i = 0; i < g.v.size(); ++i) dotpg += p.v[i] * g.v[i];
        for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += sm_scale * p.v[i] * (g.v[i] - dotpg);
    });
}

ValueRef Tape::masked_softmax_rows(ValueRef logits, std::vector<uint8_t> key_mask, double sm_scale) {
    check(logits, "masked_softmax_rows");
    const Tensor& X = val(logits.idx);
    if (X.rank() != 2) raise(Errc::invalid_argument, "masked_softmax_rows expects rank-2 logits");
    if (!(sm_scale > 0.0)) raise(Errc::invalid_argument, "softmax scale must be > 0");
    int64_t rows = X.rows(), cols = X.cols();
    if (static_cast<int64_t>(key_mask.size()) != cols)
        raise(Errc::invalid_argument, "key mask length must match the key axis");
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor out = Tensor::zeros({rows, cols});
    for (int64_t r = 0; r < rows; ++r) {
        double mx = ninf;
        for (int64_t j = 0; j < cols; ++j)
            if (key_mask[static_cast<size_t>(j)] && X.at(r, j) > mx) mx = X.at(r, j);
        if (mx == ninf) raise(Errc::invalid_argument, "attention row with no valid keys");
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            double w = key_mask[static_cast<size_t>(j)] ? std::exp(sm_scale * (X.at(r, j) - mx)) : 0.0;
            out.at(r, j) = w;
            sum += w;
        }
        for (int64_t j = 0; j < cols; ++j) out.at(r, j) /= sum;
    }
    bool rg = needs(logits);
    int32_t ix = logits.idx;
    return push(std::move(out), rg,
                !rg ? BackFn{} : [ix, sm_scale, rows, cols, mask = std::move(key_mask)](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& p = t.nodes_[static_cast<size_t>(self)].val;
        Tensor& gx = t.grad_buf(ix);
        for (int64_t r = 0; r < rows; ++r) {
            double dotpg = 0.0;
            for (int64_t j = 0; j < cols; ++j) dotpg += p.at(r, j) * g.at(r, j);
            for (int64_t j = 0; j < cols; ++j) {
                if (!mask[static_cast<size_t>(j)]) continue;
                gx.at(r, j) += sm_scale * p.at(r, j) * (g.at(r, j) - dotpg);
            }
        }
    });
}

ValueRef Tape::lp_pool(ValueRef values, double p) {
    check(values, "lp_pool");
    const Tensor& X = val(values.idx);
    if (X.rank() != 1) raise(Errc::invalid_argument, "lp_pool expects rank-1");
    double y = kernel::lp_pool(X.v, p);
    bool rg = needs(values);
    int32_t iv = values.idx;
    return push(Tensor::scalar(y), rg, !rg ? BackFn{} : [iv, p, y](Tape& t, int32_t self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
        const Tensor& x = t.val(iv);
        Tensor& gv = t.grad_buf(iv);
        if (p == 1.0) {
            for (double& e : gv.v) e += g;
        } else if (y > 0.0) {
            for (size_t i = 0; i < x.v.size(); ++i)
                gv.v[i] += g * std::pow(x.v[i] / y, p - 1.0);
        }
    });
}

ValueRef Tape::interleave_attention(std::span<const ValueRef> heads) {
    if (heads.empty()) raise(Errc::invalid_argument, "interleave_attention of nothing");
    const Tensor& first = val(heads[0].idx);
    if (first.rank() != 2) raise(Errc::invalid_argument, "interleave_attention expects rank-2 maps");
    int64_t levels = first.rows(), keys = first.cols();
    int64_t H = static_cast<int64_t>(heads.size());
    bool rg = false;
    std::vector<int32_t> ids;
    for (ValueRef r : heads) {
        check(r, "interleave_attention");
        const Tensor& x = val(r.idx);
        if (x.rank() != 2 || x.rows() != levels || x.cols() != keys)
            raise(Errc::invalid_argument, "interleave_attention head shape mismatch");
        rg = rg || needs(r);
        ids.push_back(r.idx);
    }
    Tensor out = Tensor::zeros({keys, levels * H});
    for (int64_t j = 0; j < keys; ++j)
        for (int64_t m = 0; m < levels; ++m)
            for (int64_t h = 0; h < H; ++h)
                out.at(j, m * H + h) = val(ids[static_cast<size_t>(h)]).at(m, j);
    return push(std::move(out), rg, !rg ? BackFn{} : [ids, levels, keys, H](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        for (int64_t h = 0; h < H; ++h) {
            if (!t.nodes_[static_cast<size_t>(ids[static_cast<size_t>(h)])].requires_grad) continue;
            Tensor& gh = t.grad_buf(ids[static_cast<size_t>(h)]);
            for (int64_t m = 0; m < levels; ++m)
                for (int64_t j = 0; j < keys; ++j)
                    gh.at(m, j) += g.at(j, m * H + h);
        }
    });
}

ValueRef Tape::mix_heads(ValueRef alpha, ValueRef keys, int64_t heads, double p, bool max_mode) {
    check(alpha, "mix_heads");
    check(keys, "mix_heads");
    const Tensor& A = val(alpha.idx);
    const Tensor& K = val(keys.idx);
    if (A.rank() != 2 || K.rank() != 2 || A.rows() != K.rows())
        raise(Errc::invalid_argument, "mix_heads shape mismatch");
    if (heads < 1 || A.cols() % heads != 0)
        raise(Errc::invalid_argument, "mix_heads: attention width must be a multiple of the head count");
    if (!max_mode && p < 1.0) raise(Errc::invalid_p, "mix_heads exponent must be >= 1");
    int64_t T = A.rows(), levels = A.cols() / heads, d = K.cols();
    Tensor pooled = Tensor::zeros({T, heads});
    std::vector<double> buf(static_cast<size_t>(levels));
    for (int64_t j = 0; j < T; ++j)
        for (int64_t h = 0; h < heads; ++h) {
            for (int64_t m = 0; m < levels; ++m) buf[static_cast<size_t>(m)] = A.at(j, m * heads + h);
            if (max_mode) {
                double mx = buf[0];
                for (int64_t m = 1; m < levels; ++m)
                    if (buf[static_cast<size_t>(m)] > mx) mx = buf[static_cast<size_t>(m)];
                pooled.at(j, h) = mx;
            } else {
                pooled.at(j, h) = kernel::lp_pool(buf, p);
            }
        }
    Tensor out = Tensor::zeros({heads * d});
    for (int64_t h = 0; h < heads; ++h)
        for (int64_t c = 0; c < d; ++c) {
            double s = 0.0;
            for (int64_t j = 0; j < T; ++j) s += pooled.at(j, h) * K.at(j, c);
            out.at(h * d + c) = s;
        }
    bool rg = needs(alpha) || needs(keys);
    int32_t ialpha = alpha.idx, ikeys = keys.idx;
    return push(std::move(out), rg,
                !rg ? BackFn{} : [ialpha, ikeys, heads, p, max_mode, T, levels, d,
                                  pooled = std::move(pooled)](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A2 = t.val(ialpha);
        const Tensor& K2 = t.val(ikeys);
        if (t.nodes_[static_cast<size_t>(ikeys)].requires_grad) {
            Tensor& gk = t.grad_buf(ikeys);
            for (int64_t j = 0; j < T; ++j)
                for (int64_t c = 0; c < d; ++c) {
                    double s = 0.0;
                    for (int64_t h = 0; h < heads; ++h) s += pooled.at(j, h) * g.at(h * d + c);
                    gk.at(j, c) += s;
                }
        }
        if (t.nodes_[static_cast<size_t>(ialpha)].requires_grad) {
            Tensor& ga = t.grad_buf(ialpha);
            for (int64_t j = 0; j < T; ++j)
                for (int64_t h = 0; h < heads; ++h) {
                    double dpool = 0.0;
                    for (int64_t c = 0; c < d; ++c) dpool += K2.at(j, c) * g.at(h * d + c);
                    double y = pooled.at(j, h);
                    if (max_mode) {
                        // subgradient: first level attaining the max
                        for (int64_t m = 0; m < levels; ++m)
                            if (A2.at(j, m * heads + h) == y) {
                                ga.at(j, m * heads + h) += dpool;
                                break;
                            }
                    } else if (p == 1.0) {
                        for (int64_t m = 0; m < levels; ++m) ga.at(j, m * heads + h) += dpool;
                    } else if (y > 0.0) {
                        for (int64_t m = 0; m < levels; ++m)
                            ga.at(j, m * heads + h) += dpool * std::pow(A2.at(j, m * heads + h) / y, p - 1.0);
                    }
                }
        }
    });
}

ValueRef Tape::variational_matmul(ValueRef a, ValueRef mean, ValueRef logvar, ValueRef eps) {
    check(a, "variational_matmul");
    check(mean, "variational_matmul");
    check(logvar, "variational_matmul");
    check(eps, "variational_matmul");
    const Tensor& A = val(a.idx);
    const Tensor& M = val(mean.idx);
    const Tensor& L = val(logvar.idx);
    const Tensor& E = val(eps.idx);
    if (A.rank() != 2 || M.rank() != 2 || A.cols() != M.rows() || !M.same_shape(L))
        raise(Errc::invalid_argument, "variational_matmul shape mismatch");
    int64_t m = A.rows(), I = A.cols(), J = M.cols();
    if (E.rank() != 2 || E.rows() != m || E.cols() != J)
        raise(Errc::invalid_argument, "variational_matmul noise shape mismatch");
    Tensor sig2 = Tensor::zeros({I, J});
    for (size_t i = 0; i < sig2.v.size(); ++i) sig2.v[i] = std::exp(L.v[i]);
    Tensor sd = Tensor::zeros({m, J});
    Tensor out = Tensor::zeros({m, J});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < J; ++j) {
            double gamma = 0.0, delta = 0.0;
            for (int64_t k = 0; k < I; ++k) {
                double av = A.at(i, k);
                gamma += av * M.at(k, j);
                delta += av * av * sig2.at(k, j);
            }
            double s = std::sqrt(delta);
            sd.at(i, j) = s;
            out.at(i, j) = gamma + s * E.at(i, j);
        }
    bool rg = needs(a) || needs(mean) || needs(logvar) || needs(eps);
    int32_t ia = a.idx, im = mean.idx, il = logvar.idx, ie = eps.idx;
    return push(std::move(out), rg,
                !rg ? BackFn{} : [ia, im, il, ie, m, I, J, sig2 = std::move(sig2),
                                  sd = std::move(sd)](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A2 = t.val(ia);
        const Tensor& M2 = t.val(im);
        const Tensor& E2 = t.val(ie);
        // d loss / d delta
        Tensor ddelta = Tensor::zeros({m, J});
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < J; ++j) {
                double s = sd.at(i, j);
                ddelta.at(i, j) = s == 0.0 ? 0.0 : g.at(i, j) * E2.at(i, j) * 0.5 / s;
            }
        if (t.nodes_[static_cast<size_t>(im)].requires_grad) {
            Tensor& gm = t.grad_buf(im);
            for (int64_t k = 0; k < I; ++k)
                for (int64_t j = 0; j < J; ++j) {
                    double s = 0.0;
                    for (int64_t i = 0; i < m; ++i) s += A2.at(i, k) * g.at(i, j);
                    gm.at(k, j) += s;
                }
        }
        if (t.nodes_[static_cast<size_t>(il)].requires_grad) {
            Tensor& gl = t.grad_buf(il);
            for (int64_t k = 0; k < I; ++k)
                for (int64_t j = 0; j < J; ++j) {
                    double s = 0.0;
                    for (int64_t i = 0; i < m; ++i) s += A2.at(i, k) * A2.at(i, k) * ddelta.at(i, j);
                    gl.at(k, j) += sig2.at(k, j) * s;
                }
        }
        if (t.nodes_[static_cast<size_t>(ia)].requires_grad) {
            Tensor& ga = t.grad_buf(ia);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t k = 0; k < I; ++k) {
                    double s = 0.0;
                    for (int64_t j = 0; j < J; ++j)
                        s += g.at(i, j) * M2.at(k, j) + 2.0 * A2.at(i, k) * sig2.at(k, j) * ddelta.at(i, j);
                    ga.at(i, k) += s;
                }
        }
        if (t.nodes_[static_cast<size_t>(ie)].requires_grad) {
            Tensor& ge = t.grad_buf(ie);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < J; ++j) ge.at(i, j) += g.at(i, j) * sd.at(i, j);
        }
    });
}

void Tape::backward(ValueRef loss) {
    check(loss, "backward");
    const Node& ln = nodes_[static_cast<size_t>(loss.idx)];
    if (ln.val.numel() != 1)
        raise(Errc::invalid_argument, "backward expects a scalar loss");
    if (!ln.requires_grad) return;
    grad_buf(loss.idx).v[0] = 1.0;
    for (int32_t i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.grad_alloc && n.requires_grad && n.back) n.back(*this, i);
    }
}

} // namespace attnmix::num
