#include "enroll/tape.h"

#include <algorithm>
#include <cmath>

#include "enroll/errors.h"

namespace enroll {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw DimError(msg);
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> backward) {
    Node n;
    n.grad = Tensor(value.shape);
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor t) { return push(std::move(t), nullptr); }

Var Tape::matvec(Var w, Var x) {
    const Tensor& W = val(w);
    const Tensor& X = val(x);
    require(W.rank() == 2 && X.rank() == 1 && W.cols() == X.numel(),
            "matvec: W " + shape_str(W.shape) + " incompatible with x " + shape_str(X.shape));
    const size_t m = W.rows(), n = W.cols();
    Tensor out(Shape{m});
    for (size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        const double* wr = &W.values[j * n];
        for (size_t i = 0; i < n; ++i) acc += wr[i] * X.values[i];
        out.values[j] = acc;
    }
    Var r = push(std::move(out), nullptr);
    const int wi = w.idx, xi = x.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [wi, xi, ri, m, n](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& W = t.nodes_[static_cast<size_t>(wi)].value;
        const Tensor& X = t.nodes_[static_cast<size_t>(xi)].value;
        Tensor& gw = t.nodes_[static_cast<size_t>(wi)].grad;
        Tensor& gx = t.nodes_[static_cast<size_t>(xi)].grad;
        for (size_t j = 0; j < m; ++j) {
            const double gj = g.values[j];
            if (gj == 0.0) continue;
            double* gwr = &gw.values[j * n];
            const double* wr = &W.values[j * n];
            for (size_t i = 0; i < n; ++i) {
                gwr[i] += gj * X.values[i];
                gx.values[i] += gj * wr[i];
            }
        }
    };
    return r;
}

Var Tape::affine(Var x, Var w, Var b) {
    const Tensor& W = val(w);
    const Tensor& B = val(b);
    require(B.rank() == 1 && W.rank() == 2 && W.rows() == B.numel(),
            "affine: W " + shape_str(W.shape) + " incompatible with b " + shape_str(B.shape));
    return add(matvec(w, x), b);
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
            "matmul: " + shape_str(A.shape) + " x " + shape_str(B.shape));
    const size_t M = A.rows(), K = A.cols(), N = B.cols();
    Tensor out(Shape{M, N});
    for (size_t i = 0; i < M; ++i) {
        const double* ar = &A.values[i * K];
        double* orow = &out.values[i * N];
        for (size_t k = 0; k < K; ++k) {
            const double av = ar[k];
            if (av == 0.0) continue;
            const double* br = &B.values[k * N];
            for (size_t j = 0; j < N; ++j) orow[j] += av * br[j];
        }
    }
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, bi = b.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, bi, ri, M, K, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& A = t.nodes_[static_cast<size_t>(ai)].value;
        const Tensor& B = t.nodes_[static_cast<size_t>(bi)].value;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        Tensor& gb = t.nodes_[static_cast<size_t>(bi)].grad;
        // dA += g·Bᵀ ; dB += Aᵀ·g
        for (size_t i = 0; i < M; ++i) {
            const double* gr = &g.values[i * N];
            double* gar = &ga.values[i * K];
            for (size_t k = 0; k < K; ++k) {
                const double* br = &B.values[k * N];
                double acc = 0.0;
                for (size_t j = 0; j < N; ++j) acc += gr[j] * br[j];
                gar[k] += acc;
            }
            const double* arow = &A.values[i * K];
            for (size_t k = 0; k < K; ++k) {
                const double av = arow[k];
                if (av == 0.0) continue;
                double* gbr = &gb.values[k * N];
                for (size_t j = 0; j < N; ++j) gbr[j] += av * gr[j];
            }
        }
    };
    return r;
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(),
            "matmul_nt: " + shape_str(A.shape) + " x " + shape_str(B.shape) + "ᵀ");
    const size_t M = A.rows(), K = A.cols(), N = B.rows();
    Tensor out(Shape{M, N});
    for (size_t i = 0; i < M; ++i) {
        const double* ar = &A.values[i * K];
        double* orow = &out.values[i * N];
        for (size_t j = 0; j < N; ++j) {
            const double* br = &B.values[j * K];
            double acc = 0.0;
            for (size_t k = 0; k < K; ++k) acc += ar[k] * br[k];
            orow[j] = acc;
        }
    }
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, bi = b.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, bi, ri, M, K, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& A = t.nodes_[static_cast<size_t>(ai)].value;
        const Tensor& B = t.nodes_[static_cast<size_t>(bi)].value;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        Tensor& gb = t.nodes_[static_cast<size_t>(bi)].grad;
        // C = A·Bᵀ: dA += g·B ; dB += gᵀ·A
        for (size_t i = 0; i < M; ++i) {
            const double* gr = &g.values[i * N];
            double* gar = &ga.values[i * K];
            const double* arow = &A.values[i * K];
            for (size_t j = 0; j < N; ++j) {
                const double gv = gr[j];
                if (gv == 0.0) continue;
                const double* br = &B.values[j * K];
                double* gbr = &gb.values[j * K];
                for (size_t k = 0; k < K; ++k) {
                    gar[k] += gv * br[k];
                    gbr[k] += gv * arow[k];
                }
            }
        }
    };
    return r;
}

Var Tape::linear(Var x, Var w, Var b) {
    size_t M = 0, m = 0;
    {
        // scope the references: matmul_nt below grows the node vector, which
        // can reallocate and invalidate them
        const Tensor& X = val(x);
        const Tensor& W = val(w);
        const Tensor& B = val(b);
        require(X.rank() == 2 && W.rank() == 2 && B.rank() == 1 && X.cols() == W.cols() &&
                    W.rows() == B.numel(),
                "linear: x " + shape_str(X.shape) + ", W " + shape_str(W.shape) + ", b " +
                    shape_str(B.shape));
        M = X.rows();
        m = W.rows();
    }
    Var y = matmul_nt(x, w);
    // broadcast bias over rows
    const Tensor& B = val(b);
    Tensor out = val(y);
    for (size_t i = 0; i < M; ++i)
        for (size_t j = 0; j < m; ++j) out.values[i * m + j] += B.values[j];
    Var r = push(std::move(out), nullptr);
    const int yi = y.idx, bi = b.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [yi, bi, ri, M, m](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& gy = t.nodes_[static_cast<size_t>(yi)].grad;
        Tensor& gb = t.nodes_[static_cast<size_t>(bi)].grad;
        for (size_t i = 0; i < M; ++i)
            for (size_t j = 0; j < m; ++j) {
                gy.values[i * m + j] += g.values[i * m + j];
                gb.values[j] += g.values[i * m + j];
            }
    };
    return r;
}

Var Tape::transpose(Var a) {
    const Tensor& A = val(a);
    require(A.rank() == 2, "transpose: rank-2 required, got " + shape_str(A.shape));
    const size_t M = A.rows(), N = A.cols();
    Tensor out(Shape{N, M});
    for (size_t i = 0; i < M; ++i)
        for (size_t j = 0; j < N; ++j) out.values[j * M + i] = A.values[i * N + j];
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri, M, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (size_t i = 0; i < M; ++i)
            for (size_t j = 0; j < N; ++j) ga.values[i * N + j] += g.values[j * M + i];
    };
    return r;
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "add: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out = A;
    for (size_t i = 0; i < out.numel(); ++i) out.values[i] += B.values[i];
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, bi = b.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, bi, ri](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        Tensor& gb = t.nodes_[static_cast<size_t>(bi)].grad;
        for (size_t i = 0; i < g.numel(); ++i) {
            ga.values[i] += g.values[i];
            gb.values[i] += g.values[i];
        }
    };
    return r;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "sub: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out = A;
    for (size_t i = 0; i < out.numel(); ++i) out.values[i] -= B.values[i];
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, bi = b.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, bi, ri](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        Tensor& gb = t.nodes_[static_cast<size_t>(bi)].grad;
        for (size_t i = 0; i < g.numel(); ++i) {
            ga.values[i] += g.values[i];
            gb.values[i] -= g.values[i];
        }
    };
    return r;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "mul: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out = A;
    for (size_t i = 0; i < out.numel(); ++i) out.values[i] *= B.values[i];
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, bi = b.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, bi, ri](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& A = t.nodes_[static_cast<size_t>(ai)].value;
        const Tensor& B = t.nodes_[static_cast<size_t>(bi)].value;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        Tensor& gb = t.nodes_[static_cast<size_t>(bi)].grad;
        for (size_t i = 0; i < g.numel(); ++i) {
            ga.values[i] += g.values[i] * B.values[i];
            gb.values[i] += g.values[i] * A.values[i];
        }
    };
    return r;
}

Var Tape::scale(Var a, double c) {
    Tensor out = val(a);
    for (double& v : out.values) v *= c;
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri, c](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (size_t i = 0; i < g.numel(); ++i) ga.values[i] += c * g.values[i];
    };
    return r;
}

Var Tape::relu(Var a) {
    const Tensor& A = val(a);
    Tensor out = A;
    for (double v : A.values) min_abs_relu_input_ = std::min(min_abs_relu_input_, std::fabs(v));
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& A = t.nodes_[static_cast<size_t>(ai)].value;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (size_t i = 0; i < g.numel(); ++i)
            if (A.values[i] > 0.0) ga.values[i] += g.values[i];
    };
    return r;
}

Var Tape::sigmoid(Var a) {
    Tensor out = val(a);
    for (double& v : out.values) v = 1.0 / (1.0 + std::exp(-v));
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& Y = t.nodes_[static_cast<size_t>(ri)].value;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (size_t i = 0; i < g.numel(); ++i)
            ga.values[i] += g.values[i] * Y.values[i] * (1.0 - Y.values[i]);
    };
    return r;
}

namespace {

void softmax_row(const double* in, double* out, size_t k) {
    double mx = in[0];
    for (size_t i = 1; i < k; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (size_t i = 0; i < k; ++i) {
        out[i] = std::exp(in[i] - mx);
        sum += out[i];
    }
    for (size_t i = 0; i < k; ++i) out[i] /= sum;
}

void softmax_row_backward(const double* y, const double* g, double* ga, size_t k) {
    double dot = 0.0;
    for (size_t i = 0; i < k; ++i) dot += g[i] * y[i];
    for (size_t i = 0; i < k; ++i) ga[i] += y[i] * (g[i] - dot);
}

}  // namespace

Var Tape::softmax(Var a) {
    const Tensor& A = val(a);
    require(A.rank() == 1 && A.numel() >= 1, "softmax: rank-1 required, got " + shape_str(A.shape));
    Tensor out(A.shape);
    softmax_row(A.values.data(), out.values.data(), A.numel());
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& Y = t.nodes_[static_cast<size_t>(ri)].value;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        softmax_row_backward(Y.values.data(), g.values.data(), ga.values.data(), g.numel());
    };
    return r;
}

Var Tape::row_softmax(Var a) {
    const Tensor& A = val(a);
    require(A.rank() == 2, "row_softmax: rank-2 required, got " + shape_str(A.shape));
    const size_t M = A.rows(), N = A.cols();
    Tensor out(A.shape);
    for (size_t i = 0; i < M; ++i)
        softmax_row(&A.values[i * N], &out.values[i * N], N);
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri, M, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& Y = t.nodes_[static_cast<size_t>(ri)].value;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (size_t i = 0; i < M; ++i)
            softmax_row_backward(&Y.values[i * N], &g.values[i * N], &ga.values[i * N], N);
    };
    return r;
}

Var Tape::concat(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat: empty part list");
    size_t total = 0;
    for (Var p : parts) {
        require(val(p).rank() == 1, "concat: rank-1 parts required");
        total += val(p).numel();
    }
    Tensor out(Shape{total});
    size_t off = 0;
    std::vector<int> idxs;
    std::vector<size_t> sizes;
    for (Var p : parts) {
        const Tensor& P = val(p);
        std::copy(P.values.begin(), P.values.end(), out.values.begin() + static_cast<long>(off));
        off += P.numel();
        idxs.push_back(p.idx);
        sizes.push_back(P.numel());
    }
    Var r = push(std::move(out), nullptr);
    const int ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [idxs, sizes, ri](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        size_t off = 0;
        for (size_t p = 0; p < idxs.size(); ++p) {
            Tensor& gp = t.nodes_[static_cast<size_t>(idxs[p])].grad;
            for (size_t i = 0; i < sizes[p]; ++i) gp.values[i] += g.values[off + i];
            off += sizes[p];
        }
    };
    return r;
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.rows() == B.rows(),
            "concat_cols: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    const size_t M = A.rows(), P = A.cols(), Q = B.cols();
    Tensor out(Shape{M, P + Q});
    for (size_t i = 0; i < M; ++i) {
        std::copy(&A.values[i * P], &A.values[i * P] + P, &out.values[i * (P + Q)]);
        std::copy(&B.values[i * Q], &B.values[i * Q] + Q, &out.values[i * (P + Q) + P]);
    }
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, bi = b.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, bi, ri, M, P, Q](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        Tensor& gb = t.nodes_[static_cast<size_t>(bi)].grad;
        for (size_t i = 0; i < M; ++i) {
            for (size_t j = 0; j < P; ++j) ga.values[i * P + j] += g.values[i * (P + Q) + j];
            for (size_t j = 0; j < Q; ++j) gb.values[i * Q + j] += g.values[i * (P + Q) + P + j];
        }
    };
    return r;
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
    require(!rows.empty(), "stack_rows: empty row list");
    const size_t N = val(rows[0]).numel();
    std::vector<int> idxs;
    for (Var v : rows) {
        require(val(v).rank() == 1 && val(v).numel() == N, "stack_rows: row shape mismatch");
        idxs.push_back(v.idx);
    }
    const size_t M = rows.size();
    Tensor out(Shape{M, N});
    for (size_t i = 0; i < M; ++i) {
        const Tensor& R = val(rows[i]);
        std::copy(R.values.begin(), R.values.end(), &out.values[i * N]);
    }
    Var r = push(std::move(out), nullptr);
    const int ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [idxs, ri, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        for (size_t i = 0; i < idxs.size(); ++i) {
            Tensor& gr = t.nodes_[static_cast<size_t>(idxs[i])].grad;
            for (size_t j = 0; j < N; ++j) gr.values[j] += g.values[i * N + j];
        }
    };
    return r;
}

Var Tape::gather_rows(Var table, std::vector<size_t> rows) {
    const Tensor& T = val(table);
    require(T.rank() == 2, "gather_rows: table must be rank-2");
    const size_t N = T.cols();
    for (size_t r : rows)
        require(r < T.rows(), "gather_rows: row index " + std::to_string(r) + " out of " +
                                  shape_str(T.shape));
    Tensor out(Shape{rows.size(), N});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(&T.values[rows[i] * N], &T.values[rows[i] * N] + N, &out.values[i * N]);
    Var r = push(std::move(out), nullptr);
    const int ti = table.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ti, ri, rows, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& gt = t.nodes_[static_cast<size_t>(ti)].grad;
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t j = 0; j < N; ++j) gt.values[rows[i] * N + j] += g.values[i * N + j];
    };
    return r;
}

Var Tape::row(Var table, size_t r) {
    const Tensor& T = val(table);
    require(T.rank() == 2 && r < T.rows(),
            "row: index " + std::to_string(r) + " out of " + shape_str(T.shape));
    const size_t N = T.cols();
    Tensor out(Shape{N});
    std::copy(&T.values[r * N], &T.values[r * N] + N, out.values.begin());
    Var rv = push(std::move(out), nullptr);
    const int ti = table.idx, ri = rv.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ti, ri, r, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& gt = t.nodes_[static_cast<size_t>(ti)].grad;
        for (size_t j = 0; j < N; ++j) gt.values[r * N + j] += g.values[j];
    };
    return rv;
}

Var Tape::mean_rows(Var a) {
    Var s = sum_rows(a);
    return scale(s, 1.0 / static_cast<double>(val(a).rows()));
}

Var Tape::sum_rows(Var a) {
    const Tensor& A = val(a);
    require(A.rank() == 2, "sum_rows: rank-2 required, got " + shape_str(A.shape));
    const size_t M = A.rows(), N = A.cols();
    Tensor out(Shape{N});
    for (size_t i = 0; i < M; ++i)
        for (size_t j = 0; j < N; ++j) out.values[j] += A.values[i * N + j];
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri, M, N](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (size_t i = 0; i < M; ++i)
            for (size_t j = 0; j < N; ++j) ga.values[i * N + j] += g.values[j];
    };
    return r;
}

Var Tape::sum(Var a) {
    const Tensor& A = val(a);
    Tensor out(Shape{1});
    for (double v : A.values) out.values[0] += v;
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri](Tape& t) {
        const double g = t.nodes_[static_cast<size_t>(ri)].grad.values[0];
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (double& v : ga.values) v += g;
    };
    return r;
}

Var Tape::dropout(Var a, Rng& rng, double rate) {
    if (rate <= 0.0) return a;
    require(rate < 1.0, "dropout: rate must be < 1");
    const Tensor& A = val(a);
    const double keep = 1.0 - rate;
    std::vector<double> mask(A.numel());
    for (double& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    Tensor out = A;
    for (size_t i = 0; i < out.numel(); ++i) out.values[i] *= mask[i];
    Var r = push(std::move(out), nullptr);
    const int ai = a.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [ai, ri, mask](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        Tensor& ga = t.nodes_[static_cast<size_t>(ai)].grad;
        for (size_t i = 0; i < g.numel(); ++i) ga.values[i] += g.values[i] * mask[i];
    };
    return r;
}

Var Tape::cross_entropy(Var probs, size_t gold) {
    const Tensor& P = val(probs);
    require(P.rank() == 1, "cross_entropy: rank-1 probabilities required");
    if (gold >= P.numel())
        throw DataError("cross_entropy: gold index " + std::to_string(gold) + " out of range " +
                        std::to_string(P.numel()));
    constexpr double kFloor = 1e-12;
    const double p = std::max(P.values[gold], kFloor);
    Tensor out(Shape{1});
    out.values[0] = -std::log(p);
    Var r = push(std::move(out), nullptr);
    const int pi = probs.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [pi, ri, gold](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& P = t.nodes_[static_cast<size_t>(pi)].value;
        Tensor& gp = t.nodes_[static_cast<size_t>(pi)].grad;
        if (P.values[gold] > 1e-12) gp.values[gold] += g.values[0] * (-1.0 / P.values[gold]);
    };
    return r;
}

Var Tape::bce_logits_mean(Var logits, Tensor targets) {
    const Tensor& X = val(logits);
    require(X.rank() == 1 && targets.same_shape(X),
            "bce_logits_mean: " + shape_str(X.shape) + " vs " + shape_str(targets.shape));
    const size_t k = X.numel();
    double loss = 0.0;
    for (size_t i = 0; i < k; ++i) {
        const double x = X.values[i], t = targets.values[i];
        loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
    }
    Tensor out(Shape{1});
    out.values[0] = loss / static_cast<double>(k);
    Var r = push(std::move(out), nullptr);
    const int xi = logits.idx, ri = r.idx;
    nodes_[static_cast<size_t>(ri)].backward = [xi, ri, targets, k](Tape& t) {
        const Tensor& g = t.nodes_[static_cast<size_t>(ri)].grad;
        const Tensor& X = t.nodes_[static_cast<size_t>(xi)].value;
        Tensor& gx = t.nodes_[static_cast<size_t>(xi)].grad;
        for (size_t i = 0; i < k; ++i) {
            const double s = 1.0 / (1.0 + std::exp(-X.values[i]));
            gx.values[i] += g.values[0] * (s - targets.values[i]) / static_cast<double>(k);
        }
    };
    return r;
}

void Tape::backward(Var loss) {
    require(loss.valid() && static_cast<size_t>(loss.idx) < nodes_.size(),
            "backward: invalid loss node");
    Tensor& g = nodes_[static_cast<size_t>(loss.idx)].grad;
    require(g.numel() == 1, "backward: loss must be scalar");
    g.values[0] = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        auto& bw = nodes_[static_cast<size_t>(i)].backward;
        if (bw) bw(*this);
    }
}

}  // namespace enroll
