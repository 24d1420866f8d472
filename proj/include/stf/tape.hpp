#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stf/dense.hpp"
#include "stf/errors.hpp"

namespace stf::ad {

enum class Act { Relu, Tanh, Sigmoid };

inline Act act_from_string(const std::string& s) {
  if (s == "relu") return Act::Relu;
  if (s == "tanh") return Act::Tanh;
  if (s == "sigmoid") return Act::Sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

inline const char* act_name(Act a) {
  switch (a) {
    case Act::Relu: return "relu";
    case Act::Tanh: return "tanh";
    default: return "sigmoid";
  }
}

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Record-and-replay reverse-mode differentiation over DenseArray values.
// Single-writer: one tape is used by one thread. Backward walks the records
// in strict reverse order, so repeated backward passes are bit-identical.
class Tape {
 public:
  Var leaf(DenseArray value, bool needs_grad = false) {
    nodes_.push_back(Node{std::move(value), DenseArray(), {}, {}, needs_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const DenseArray& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

  DenseArray& grad(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    ensure_grad(n);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape once, visiting each record
  // exactly once. Grads are reset first, so calling twice gives identical
  // results.
  void backward(Var root) {
    for (auto& n : nodes_) {
      if (!n.grad.empty()) n.grad.fill(0.0);
    }
    Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.value.numel() != 1) throw NumericError("backward: root must be scalar");
    ensure_grad(r);
    r.grad[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && n.needs_grad && !n.grad.empty()) n.backward(*this, n);
    }
  }

  // --- operations ----------------------------------------------------------

  Var matmul(Var a, Var b) {
    const DenseArray& A = value(a);
    const DenseArray& B = value(b);
    DenseArray C = matmul_raw(A, B);
    return record(std::move(C), {a, b}, [](Tape& t, Node& n) {
      const DenseArray& A = t.val(n.inputs[0]);
      const DenseArray& B = t.val(n.inputs[1]);
      const long m = A.dim(0), k = A.dim(1), p = B.dim(1);
      if (t.wants(n.inputs[0]))
        mm_nt(n.grad.data(), B.data(), t.gradbuf(n.inputs[0], {m, k}).data(), m, p, k, true);
      if (t.wants(n.inputs[1]))
        mm_tn(A.data(), n.grad.data(), t.gradbuf(n.inputs[1], {k, p}).data(), k, m, p, true);
    });
  }

  // y = x * w^T + b, with w stored out x in.
  Var linear(Var x, Var w, Var b) {
    const DenseArray& X = value(x);
    const DenseArray& W = value(w);
    const DenseArray& B = value(b);
    if (X.dim(1) != W.dim(1)) throw DimensionError("linear: input dim mismatch");
    if (B.numel() != W.dim(0)) throw DimensionError("linear: bias dim mismatch");
    const long n = X.dim(0), in = X.dim(1), out = W.dim(0);
    DenseArray Y({n, out});
    mm_nt(X.data(), W.data(), Y.data(), n, in, out);
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < out; ++j) Y(i, j) += B[j];
    return record(std::move(Y), {x, w, b}, [](Tape& t, Node& nd) {
      const DenseArray& X = t.val(nd.inputs[0]);
      const DenseArray& W = t.val(nd.inputs[1]);
      const long n = X.dim(0), in = X.dim(1), out = W.dim(0);
      if (t.wants(nd.inputs[0]))
        mm_nn(nd.grad.data(), W.data(), t.gradbuf(nd.inputs[0], {n, in}).data(), n, out, in, true);
      if (t.wants(nd.inputs[1]))
        mm_tn(nd.grad.data(), X.data(), t.gradbuf(nd.inputs[1], {out, in}).data(), out, n, in, true);
      if (t.wants(nd.inputs[2])) {
        DenseArray& gb = t.gradbuf(nd.inputs[2], {out});
        for (long i = 0; i < n; ++i)
          for (long j = 0; j < out; ++j) gb[j] += nd.grad(i, j);
      }
    });
  }

  Var add(Var a, Var b) {
    const DenseArray& A = value(a);
    const DenseArray& B = value(b);
    if (A.shape() != B.shape()) throw DimensionError("add: shape mismatch");
    DenseArray C = A;
    for (long i = 0; i < C.numel(); ++i) C[i] += B[i];
    return record(std::move(C), {a, b}, [](Tape& t, Node& n) {
      for (int s = 0; s < 2; ++s) {
        if (!t.wants(n.inputs[s])) continue;
        DenseArray& g = t.gradbuf(n.inputs[s], t.val(n.inputs[s]).shape());
        for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
      }
    });
  }

  Var sub(Var a, Var b) {
    const DenseArray& A = value(a);
    const DenseArray& B = value(b);
    if (A.shape() != B.shape()) throw DimensionError("sub: shape mismatch");
    DenseArray C = A;
    for (long i = 0; i < C.numel(); ++i) C[i] -= B[i];
    return record(std::move(C), {a, b}, [](Tape& t, Node& n) {
      if (t.wants(n.inputs[0])) {
        DenseArray& g = t.gradbuf(n.inputs[0], t.val(n.inputs[0]).shape());
        for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
      }
      if (t.wants(n.inputs[1])) {
        DenseArray& g = t.gradbuf(n.inputs[1], t.val(n.inputs[1]).shape());
        for (long i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
      }
    });
  }

  Var hadamard(Var a, Var b) {
    const DenseArray& A = value(a);
    const DenseArray& B = value(b);
    if (A.shape() != B.shape()) throw DimensionError("hadamard: shape mismatch");
    DenseArray C = A;
    for (long i = 0; i < C.numel(); ++i) C[i] *= B[i];
    return record(std::move(C), {a, b}, [](Tape& t, Node& n) {
      const DenseArray& A = t.val(n.inputs[0]);
      const DenseArray& B = t.val(n.inputs[1]);
      if (t.wants(n.inputs[0])) {
        DenseArray& g = t.gradbuf(n.inputs[0], A.shape());
        for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * B[i];
      }
      if (t.wants(n.inputs[1])) {
        DenseArray& g = t.gradbuf(n.inputs[1], B.shape());
        for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * A[i];
      }
    });
  }

  Var scale(Var a, double c) {
    DenseArray C = value(a);
    for (long i = 0; i < C.numel(); ++i) C[i] *= c;
    return record(std::move(C), {a}, [c](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      DenseArray& g = t.gradbuf(n.inputs[0], t.val(n.inputs[0]).shape());
      for (long i = 0; i < g.numel(); ++i) g[i] += c * n.grad[i];
    });
  }

  Var transpose(Var a) {
    DenseArray T = transpose_raw(value(a));
    return record(std::move(T), {a}, [](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      DenseArray& g = t.gradbuf(n.inputs[0], t.val(n.inputs[0]).shape());
      const long r = n.grad.dim(0), c = n.grad.dim(1);
      for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) g(j, i) += n.grad(i, j);
    });
  }

  Var reshape(Var a, Shape shape) {
    DenseArray C = value(a).reshaped(std::move(shape));
    return record(std::move(C), {a}, [](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      DenseArray& g = t.gradbuf(n.inputs[0], t.val(n.inputs[0]).shape());
      for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const long rows = value(parts[0]).dim(0);
    long cols = 0;
    for (Var p : parts) {
      if (value(p).dim(0) != rows) throw DimensionError("concat_cols: row mismatch");
      cols += value(p).dim(1);
    }
    DenseArray C({rows, cols});
    long off = 0;
    for (Var p : parts) {
      const DenseArray& P = value(p);
      for (long i = 0; i < rows; ++i)
        std::memcpy(C.data() + i * cols + off, P.data() + i * P.dim(1),
                    static_cast<std::size_t>(P.dim(1)) * sizeof(double));
      off += P.dim(1);
    }
    return record(std::move(C), parts, [](Tape& t, Node& n) {
      const long rows = n.value.dim(0), cols = n.value.dim(1);
      long off = 0;
      for (Var p : n.inputs) {
        const long w = t.val(p).dim(1);
        if (t.wants(p)) {
          DenseArray& g = t.gradbuf(p, t.val(p).shape());
          for (long i = 0; i < rows; ++i)
            for (long j = 0; j < w; ++j) g(i, j) += n.grad[i * cols + off + j];
        }
        off += w;
      }
    });
  }

  // Numerically stable per-row softmax (max subtraction).
  Var softmax_rows(Var a) {
    const DenseArray& A = value(a);
    DenseArray Y = A;
    const long r = A.dim(0), c = A.dim(1);
    for (long i = 0; i < r; ++i) {
      double mx = Y(i, 0);
      for (long j = 1; j < c; ++j) mx = std::max(mx, Y(i, j));
      double sum = 0.0;
      for (long j = 0; j < c; ++j) {
        const double e = std::exp(Y(i, j) - mx);
        Y(i, j) = e;
        sum += e;
      }
      for (long j = 0; j < c; ++j) Y(i, j) /= sum;
    }
    return record(std::move(Y), {a}, [](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      DenseArray& g = t.gradbuf(n.inputs[0], t.val(n.inputs[0]).shape());
      const long r = n.value.dim(0), c = n.value.dim(1);
      for (long i = 0; i < r; ++i) {
        double dot = 0.0;
        for (long j = 0; j < c; ++j) dot += n.grad(i, j) * n.value(i, j);
        for (long j = 0; j < c; ++j) g(i, j) += n.value(i, j) * (n.grad(i, j) - dot);
      }
    });
  }

  // Per-row normalization with learned scale and shift; eps fixed at 1e-5.
  Var layer_norm(Var x, Var gamma, Var beta) {
    constexpr double kEps = 1e-5;
    const DenseArray& X = value(x);
    const long r = X.dim(0), c = X.dim(1);
    const DenseArray& G = value(gamma);
    const DenseArray& B = value(beta);
    if (G.numel() != c || B.numel() != c) throw DimensionError("layer_norm: param dim mismatch");
    auto stats = std::make_shared<DenseArray>(Shape{r, 2});  // (mean, inv_std) per row
    DenseArray Y({r, c});
    for (long i = 0; i < r; ++i) {
      double mu = 0.0;
      for (long j = 0; j < c; ++j) mu += X(i, j);
      mu /= static_cast<double>(c);
      double var = 0.0;
      for (long j = 0; j < c; ++j) {
        const double d = X(i, j) - mu;
        var += d * d;
      }
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + kEps);
      (*stats)(i, 0) = mu;
      (*stats)(i, 1) = inv;
      for (long j = 0; j < c; ++j) Y(i, j) = G[j] * (X(i, j) - mu) * inv + B[j];
    }
    return record(std::move(Y), {x, gamma, beta}, [stats](Tape& t, Node& n) {
      const DenseArray& X = t.val(n.inputs[0]);
      const DenseArray& G = t.val(n.inputs[1]);
      const long r = X.dim(0), c = X.dim(1);
      const double cd = static_cast<double>(c);
      DenseArray* gx = t.wants(n.inputs[0]) ? &t.gradbuf(n.inputs[0], X.shape()) : nullptr;
      DenseArray* gg = t.wants(n.inputs[1]) ? &t.gradbuf(n.inputs[1], G.shape()) : nullptr;
      DenseArray* gb = t.wants(n.inputs[2]) ? &t.gradbuf(n.inputs[2], G.shape()) : nullptr;
      for (long i = 0; i < r; ++i) {
        const double mu = (*stats)(i, 0);
        const double inv = (*stats)(i, 1);
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (long j = 0; j < c; ++j) {
          const double xh = (X(i, j) - mu) * inv;
          const double dxh = n.grad(i, j) * G[j];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
          if (gg) (*gg)[j] += n.grad(i, j) * xh;
          if (gb) (*gb)[j] += n.grad(i, j);
        }
        if (gx) {
          for (long j = 0; j < c; ++j) {
            const double xh = (X(i, j) - mu) * inv;
            const double dxh = n.grad(i, j) * G[j];
            (*gx)(i, j) += inv * (dxh - sum_dxh / cd - xh * sum_dxh_xh / cd);
          }
        }
      }
    });
  }

  // Element-wise nonlinearity; relu derivative at 0 is defined as 0.
  Var activation(Var a, Act kind) {
    const DenseArray& A = value(a);
    DenseArray Y = A;
    switch (kind) {
      case Act::Relu:
        for (long i = 0; i < Y.numel(); ++i) Y[i] = Y[i] > 0.0 ? Y[i] : 0.0;
        break;
      case Act::Tanh:
        for (long i = 0; i < Y.numel(); ++i) Y[i] = std::tanh(Y[i]);
        break;
      case Act::Sigmoid:
        for (long i = 0; i < Y.numel(); ++i) Y[i] = 1.0 / (1.0 + std::exp(-Y[i]));
        break;
    }
    return record(std::move(Y), {a}, [kind](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      const DenseArray& X = t.val(n.inputs[0]);
      DenseArray& g = t.gradbuf(n.inputs[0], X.shape());
      switch (kind) {
        case Act::Relu:
          for (long i = 0; i < g.numel(); ++i) g[i] += X[i] > 0.0 ? n.grad[i] : 0.0;
          break;
        case Act::Tanh:
          for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
          break;
        case Act::Sigmoid:
          for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
          break;
      }
    });
  }

  // Replicates row `row` of a table to `rows` identical output rows.
  Var broadcast_row(Var table, long row, long rows) {
    const DenseArray& T = value(table);
    if (row < 0 || row >= T.dim(0)) throw DimensionError("broadcast_row: index out of range");
    const long d = T.dim(1);
    DenseArray Y({rows, d});
    for (long i = 0; i < rows; ++i)
      std::memcpy(Y.data() + i * d, T.data() + row * d, static_cast<std::size_t>(d) * sizeof(double));
    return record(std::move(Y), {table}, [row](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      DenseArray& g = t.gradbuf(n.inputs[0], t.val(n.inputs[0]).shape());
      const long rows = n.grad.dim(0), d = n.grad.dim(1);
      for (long i = 0; i < rows; ++i)
        for (long j = 0; j < d; ++j) g(row, j) += n.grad(i, j);
    });
  }

  struct L1Result {
    Var loss;            // scalar node
    double count = 0.0;  // number of elements contributing
    bool all_masked = false;
  };

  enum class Reduction { Mean, Sum };

  // Mean (or sum) of |pred - target| over entries where mask != 0. Target and
  // mask are constants. An all-zero mask yields a defined zero with a warning
  // flag instead of NaN.
  L1Result l1_loss(Var pred, const DenseArray& target, const DenseArray* mask,
                   Reduction reduction = Reduction::Mean) {
    const DenseArray& P = value(pred);
    if (P.shape() != target.shape()) throw DimensionError("l1_loss: shape mismatch");
    if (mask && mask->shape() != target.shape()) throw DimensionError("l1_loss: mask shape mismatch");
    double sum = 0.0, count = 0.0;
    for (long i = 0; i < P.numel(); ++i) {
      const double m = mask ? (*mask)[i] : 1.0;
      if (m == 0.0) continue;
      sum += std::fabs(P[i] - target[i]);
      count += 1.0;
    }
    L1Result res;
    res.count = count;
    res.all_masked = (count == 0.0);
    const double denom = (reduction == Reduction::Mean) ? std::max(count, 1.0) : 1.0;
    DenseArray v({1});
    v[0] = res.all_masked ? 0.0 : sum / denom;
    auto tgt = std::make_shared<DenseArray>(target);
    std::shared_ptr<DenseArray> msk = mask ? std::make_shared<DenseArray>(*mask) : nullptr;
    res.loss = record(std::move(v), {pred}, [tgt, msk, denom](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      const DenseArray& P = t.val(n.inputs[0]);
      DenseArray& g = t.gradbuf(n.inputs[0], P.shape());
      const double seed = n.grad[0] / denom;
      for (long i = 0; i < g.numel(); ++i) {
        const double m = msk ? (*msk)[i] : 1.0;
        if (m == 0.0) continue;
        const double d = P[i] - (*tgt)[i];
        // sign(0) = 0 keeps the subgradient deterministic.
        g[i] += seed * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
    });
    return res;
  }

  Var sum_all(Var a) {
    const DenseArray& A = value(a);
    DenseArray v({1});
    double s = 0.0;
    for (long i = 0; i < A.numel(); ++i) s += A[i];
    v[0] = s;
    return record(std::move(v), {a}, [](Tape& t, Node& n) {
      if (!t.wants(n.inputs[0])) return;
      DenseArray& g = t.gradbuf(n.inputs[0], t.val(n.inputs[0]).shape());
      for (long i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
    });
  }

 private:
  struct Node {
    DenseArray value;
    DenseArray grad;
    std::function<void(Tape&, Node&)> backward;
    std::vector<Var> inputs;
    bool needs_grad = false;
  };

  const DenseArray& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

  bool wants(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  DenseArray& gradbuf(Var v, const Shape& shape) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.empty() && shape_numel(shape) > 0) n.grad = DenseArray(shape);
    return n.grad;
  }

  void ensure_grad(Node& n) {
    if (n.grad.empty() && n.value.numel() > 0) n.grad = DenseArray(n.value.shape());
  }

  Var record(DenseArray value, std::vector<Var> inputs,
             std::function<void(Tape&, Node&)> backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || nodes_[static_cast<std::size_t>(v.id)].needs_grad;
    nodes_.push_back(Node{std::move(value), DenseArray(), needs ? std::move(backward) : nullptr,
                          std::move(inputs), needs});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace stf::ad
