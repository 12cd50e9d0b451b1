#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "memseeker/tensor.hpp"

namespace memseeker {

// Reverse-mode tape. Ops push a closure when any input carries a grad buffer;
// backward() runs the closures in reverse order.
template <class S>
class Tape {
  public:
    void push(std::function<void()> fn) { steps_.push_back(std::move(fn)); }
    size_t size() const { return steps_.size(); }

    void backward() {
        for (size_t i = steps_.size(); i-- > 0;) steps_[i]();
    }
    void clear() { steps_.clear(); }

  private:
    std::vector<std::function<void()>> steps_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

namespace kern {

// C[m x n] (+)= A[m x k] * B[k x n], row-major. The per-element sum runs in
// ascending k for every C entry, matching a naive triple loop bit for bit.
template <class S>
void gemm_nn(const S* A, const S* B, S* C, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        S* c = C + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) c[j] = S(0);
        const S* a = A + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const S av = a[kk];
            const S* b = B + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

template <class S>
void transpose(const S* X, S* XT, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) XT[static_cast<size_t>(j) * rows + i] = X[static_cast<size_t>(i) * cols + j];
}

}  // namespace kern

namespace detail {
template <class S>
bool want_grad(Tape<S>* tape, std::initializer_list<const Tensor<S>*> inputs) {
    if (!tape) return false;
    for (const Tensor<S>* t : inputs)
        if (t->has_grad()) return true;
    return false;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// matmul and friends

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, Tape<S>* tape = nullptr) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: shape mismatch " + std::to_string(a.dim(a.ndim() - 1)) + " vs " +
                                    std::to_string(b.dim(0)));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<S> c({m, n});
    kern::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
    if (detail::want_grad(tape, {&a, &b})) {
        c.ensure_grad();
        Tensor<S> av = a, bv = b;
        Tensor<S> cv = c;
        tape->push([av, bv, cv, m, k, n]() mutable {
            if (av.has_grad()) {  // dA += dC * B^T
                std::vector<S> bt(static_cast<size_t>(k) * n);
                kern::transpose(bv.data(), bt.data(), k, n);
                kern::gemm_nn(cv.grad(), bt.data(), av.grad(), m, n, k, true);
            }
            if (bv.has_grad()) {  // dB += A^T * dC
                std::vector<S> at(static_cast<size_t>(m) * k);
                kern::transpose(av.data(), at.data(), m, k);
                kern::gemm_nn(at.data(), cv.grad(), bv.grad(), k, m, n, true);
            }
        });
    }
    return c;
}

// a[m x k] * b[n x k]^T -> [m x n]
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b, Tape<S>* tape = nullptr) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) throw std::invalid_argument("matmul_nt: shape mismatch");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor<S> c({m, n});
    {
        std::vector<S> bt(static_cast<size_t>(k) * n);
        kern::transpose(b.data(), bt.data(), n, k);
        kern::gemm_nn(a.data(), bt.data(), c.data(), m, k, n, false);
    }
    if (detail::want_grad(tape, {&a, &b})) {
        c.ensure_grad();
        Tensor<S> av = a, bv = b, cv = c;
        tape->push([av, bv, cv, m, k, n]() mutable {
            if (av.has_grad())  // dA += dC * B
                kern::gemm_nn(cv.grad(), bv.data(), av.grad(), m, n, k, true);
            if (bv.has_grad()) {  // dB += dC^T * A
                std::vector<S> ct(static_cast<size_t>(m) * n);
                kern::transpose(cv.grad(), ct.data(), m, n);
                kern::gemm_nn(ct.data(), av.data(), bv.grad(), n, m, k, true);
            }
        });
    }
    return c;
}

// ---------------------------------------------------------------------------
// elementwise / shaping

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b, Tape<S>* tape = nullptr) {
    if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
    Tensor<S> c(a.dims());
    for (size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
    if (detail::want_grad(tape, {&a, &b})) {
        c.ensure_grad();
        Tensor<S> av = a, bv = b, cv = c;
        tape->push([av, bv, cv]() mutable {
            if (av.has_grad())
                for (size_t i = 0; i < cv.size(); ++i) av.grad()[i] += cv.grad()[i];
            if (bv.has_grad())
                for (size_t i = 0; i < cv.size(); ++i) bv.grad()[i] += cv.grad()[i];
        });
    }
    return c;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S factor, Tape<S>* tape = nullptr) {
    Tensor<S> c(a.dims());
    for (size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] * factor;
    if (detail::want_grad(tape, {&a})) {
        c.ensure_grad();
        Tensor<S> av = a, cv = c;
        tape->push([av, cv, factor]() mutable {
            for (size_t i = 0; i < cv.size(); ++i) av.grad()[i] += cv.grad()[i] * factor;
        });
    }
    return c;
}

// out[i][:] = x[i][:] + bias[:]
template <class S>
Tensor<S> add_row_bias(const Tensor<S>& x, const Tensor<S>& bias, Tape<S>* tape = nullptr) {
    if (x.ndim() != 2 || static_cast<size_t>(x.dim(1)) != bias.size())
        throw std::invalid_argument("add_row_bias: shape mismatch");
    const int m = x.dim(0), n = x.dim(1);
    Tensor<S> c({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) c.at(i, j) = x.at(i, j) + bias.at(j);
    if (detail::want_grad(tape, {&x, &bias})) {
        c.ensure_grad();
        Tensor<S> xv = x, bv = bias, cv = c;
        tape->push([xv, bv, cv, m, n]() mutable {
            if (xv.has_grad())
                for (size_t i = 0; i < cv.size(); ++i) xv.grad()[i] += cv.grad()[i];
            if (bv.has_grad())
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) bv.grad()[j] += cv.grad()[static_cast<size_t>(i) * n + j];
        });
    }
    return c;
}

template <class S>
Tensor<S> concat_rows(std::span<const Tensor<S>> parts, Tape<S>* tape = nullptr) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const int n = parts[0].cols();
    int m = 0;
    bool grad = false;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
        m += p.rows();
        grad = grad || p.has_grad();
    }
    Tensor<S> c({m, n});
    int r = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.size(), c.data() + static_cast<size_t>(r) * n);
        r += p.rows();
    }
    if (tape && grad) {
        c.ensure_grad();
        std::vector<Tensor<S>> held(parts.begin(), parts.end());
        Tensor<S> cv = c;
        tape->push([held, cv, n]() mutable {
            int r = 0;
            for (auto& p : held) {
                if (p.has_grad()) {
                    const S* g = cv.grad() + static_cast<size_t>(r) * n;
                    for (size_t i = 0; i < p.size(); ++i) p.grad()[i] += g[i];
                }
                r += p.rows();
            }
        });
    }
    return c;
}

template <class S>
Tensor<S> concat_rows(std::initializer_list<Tensor<S>> parts, Tape<S>* tape = nullptr) {
    std::vector<Tensor<S>> v(parts);
    return concat_rows(std::span<const Tensor<S>>(v), tape);
}

template <class S>
Tensor<S> concat_cols(std::span<const Tensor<S>> parts, Tape<S>* tape = nullptr) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const int m = parts[0].rows();
    int n = 0;
    bool grad = false;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        n += p.cols();
        grad = grad || p.has_grad();
    }
    Tensor<S> c({m, n});
    int off = 0;
    for (const auto& p : parts) {
        const int w = p.cols();
        for (int i = 0; i < m; ++i)
            std::copy(p.data() + static_cast<size_t>(i) * w, p.data() + static_cast<size_t>(i + 1) * w,
                      c.data() + static_cast<size_t>(i) * n + off);
        off += w;
    }
    if (tape && grad) {
        c.ensure_grad();
        std::vector<Tensor<S>> held(parts.begin(), parts.end());
        Tensor<S> cv = c;
        tape->push([held, cv, m, n]() mutable {
            int off = 0;
            for (auto& p : held) {
                const int w = p.cols();
                if (p.has_grad())
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < w; ++j)
                            p.grad()[static_cast<size_t>(i) * w + j] += cv.grad()[static_cast<size_t>(i) * n + off + j];
                off += w;
            }
        });
    }
    return c;
}

template <class S>
Tensor<S> slice_rows(const Tensor<S>& x, int r0, int r1, Tape<S>* tape = nullptr) {
    if (x.ndim() != 2 || r0 < 0 || r1 > x.rows() || r0 > r1) throw std::invalid_argument("slice_rows: bad range");
    const int n = x.cols();
    Tensor<S> c({r1 - r0, n});
    std::copy(x.data() + static_cast<size_t>(r0) * n, x.data() + static_cast<size_t>(r1) * n, c.data());
    if (detail::want_grad(tape, {&x})) {
        c.ensure_grad();
        Tensor<S> xv = x, cv = c;
        tape->push([xv, cv, r0, n]() mutable {
            S* g = xv.grad() + static_cast<size_t>(r0) * n;
            for (size_t i = 0; i < cv.size(); ++i) g[i] += cv.grad()[i];
        });
    }
    return c;
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& x, int c0, int c1, Tape<S>* tape = nullptr) {
    if (x.ndim() != 2 || c0 < 0 || c1 > x.cols() || c0 > c1) throw std::invalid_argument("slice_cols: bad range");
    const int m = x.rows(), n = x.cols(), w = c1 - c0;
    Tensor<S> c({m, w});
    for (int i = 0; i < m; ++i)
        std::copy(x.data() + static_cast<size_t>(i) * n + c0, x.data() + static_cast<size_t>(i) * n + c1,
                  c.data() + static_cast<size_t>(i) * w);
    if (detail::want_grad(tape, {&x})) {
        c.ensure_grad();
        Tensor<S> xv = x, cv = c;
        tape->push([xv, cv, c0, m, n, w]() mutable {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) xv.grad()[static_cast<size_t>(i) * n + c0 + j] += cv.grad()[static_cast<size_t>(i) * w + j];
        });
    }
    return c;
}

// Gather rows of an embedding table; backward scatter-adds into the table.
template <class S>
Tensor<S> embedding_rows(const Tensor<S>& table, std::span<const int> ids, Tape<S>* tape = nullptr) {
    if (table.ndim() != 2) throw std::invalid_argument("embedding_rows: table must be 2-d");
    const int n = table.cols();
    Tensor<S> c({static_cast<int>(ids.size()), n});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows()) throw std::out_of_range("embedding_rows: id out of range");
        std::copy(table.data() + static_cast<size_t>(ids[i]) * n, table.data() + static_cast<size_t>(ids[i] + 1) * n,
                  c.data() + i * n);
    }
    if (detail::want_grad(tape, {&table})) {
        c.ensure_grad();
        Tensor<S> tv = table, cv = c;
        std::vector<int> iv(ids.begin(), ids.end());
        tape->push([tv, cv, iv, n]() mutable {
            for (size_t i = 0; i < iv.size(); ++i) {
                S* dst = tv.grad() + static_cast<size_t>(iv[i]) * n;
                const S* src = cv.grad() + i * n;
                for (int j = 0; j < n; ++j) dst[j] += src[j];
            }
        });
    }
    return c;
}

// ---------------------------------------------------------------------------
// nonlinearities

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

// tanh-approximation GELU; the backward differentiates the same approximation.
template <class S>
Tensor<S> gelu(const Tensor<S>& x, Tape<S>* tape = nullptr) {
    Tensor<S> c(x.dims());
    const double kC = kGeluC;
    for (size_t i = 0; i < x.size(); ++i) {
        double v = static_cast<double>(x.data()[i]);
        double t = std::tanh(kC * (v + 0.044715 * v * v * v));
        c.data()[i] = static_cast<S>(0.5 * v * (1.0 + t));
    }
    if (detail::want_grad(tape, {&x})) {
        c.ensure_grad();
        Tensor<S> xv = x, cv = c;
        tape->push([xv, cv]() mutable {
            for (size_t i = 0; i < xv.size(); ++i) {
                double v = static_cast<double>(xv.data()[i]);
                double u = kGeluC * (v + 0.044715 * v * v * v);
                double t = std::tanh(u);
                double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
                double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                xv.grad()[i] += cv.grad()[i] * static_cast<S>(d);
            }
        });
    }
    return c;
}

// Per-row standardization followed by the affine map gamma * xhat + beta.
// Zero-variance rows standardize to zero via eps, so they land on beta.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps = S(1e-5),
                     Tape<S>* tape = nullptr) {
    if (x.ndim() != 2 || static_cast<size_t>(x.cols()) != gamma.size() || gamma.size() != beta.size())
        throw std::invalid_argument("layer_norm: shape mismatch");
    const int m = x.rows(), n = x.cols();
    Tensor<S> c({m, n});
    Tensor<S> xhat({m, n});
    Tensor<S> inv_std({m});
    for (int i = 0; i < m; ++i) {
        S mean = S(0);
        for (int j = 0; j < n; ++j) mean += x.at(i, j);
        mean /= static_cast<S>(n);
        S var = S(0);
        for (int j = 0; j < n; ++j) {
            S d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<S>(n);
        S is = S(1) / std::sqrt(var + eps);
        inv_std.at(i) = is;
        for (int j = 0; j < n; ++j) {
            S h = (x.at(i, j) - mean) * is;
            xhat.at(i, j) = h;
            c.at(i, j) = gamma.at(j) * h + beta.at(j);
        }
    }
    if (detail::want_grad(tape, {&x, &gamma, &beta})) {
        c.ensure_grad();
        Tensor<S> xv = x, gv = gamma, bv = beta, cv = c;
        tape->push([xv, gv, bv, cv, xhat, inv_std, m, n]() mutable {
            for (int i = 0; i < m; ++i) {
                S sum_g = S(0), sum_gh = S(0);
                for (int j = 0; j < n; ++j) {
                    S go = cv.grad()[static_cast<size_t>(i) * n + j];
                    S gx = go * gv.at(j);
                    sum_g += gx;
                    sum_gh += gx * xhat.at(i, j);
                }
                if (xv.has_grad()) {
                    for (int j = 0; j < n; ++j) {
                        S go = cv.grad()[static_cast<size_t>(i) * n + j];
                        S gx = go * gv.at(j);
                        xv.grad()[static_cast<size_t>(i) * n + j] +=
                            inv_std.at(i) * (gx - sum_g / static_cast<S>(n) - xhat.at(i, j) * sum_gh / static_cast<S>(n));
                    }
                }
                if (gv.has_grad() || bv.has_grad()) {
                    for (int j = 0; j < n; ++j) {
                        S go = cv.grad()[static_cast<size_t>(i) * n + j];
                        if (gv.has_grad()) gv.grad()[j] += go * xhat.at(i, j);
                        if (bv.has_grad()) bv.grad()[j] += go;
                    }
                }
            }
        });
    }
    return c;
}

// Row softmax with max subtraction.
template <class S>
Tensor<S> softmax_rows(const Tensor<S>& x, Tape<S>* tape = nullptr) {
    if (x.ndim() != 2) throw std::invalid_argument("softmax_rows: need 2-d input");
    const int m = x.rows(), n = x.cols();
    Tensor<S> c({m, n});
    for (int i = 0; i < m; ++i) {
        S mx = x.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
        S sum = S(0);
        for (int j = 0; j < n; ++j) {
            S e = std::exp(x.at(i, j) - mx);
            c.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < n; ++j) c.at(i, j) /= sum;
    }
    if (detail::want_grad(tape, {&x})) {
        c.ensure_grad();
        Tensor<S> xv = x, cv = c;
        tape->push([xv, cv, m, n]() mutable {
            for (int i = 0; i < m; ++i) {
                S dot = S(0);
                for (int j = 0; j < n; ++j) dot += cv.grad()[static_cast<size_t>(i) * n + j] * cv.at(i, j);
                for (int j = 0; j < n; ++j)
                    xv.grad()[static_cast<size_t>(i) * n + j] +=
                        cv.at(i, j) * (cv.grad()[static_cast<size_t>(i) * n + j] - dot);
            }
        });
    }
    return c;
}

// Row softmax restricted to allowed columns; forbidden columns get exact 0.
// Each row touches only its own allowed set, so appending extra forbidden
// columns can never perturb earlier rows.
template <class S>
Tensor<S> masked_softmax_rows(const Tensor<S>& x, const std::vector<uint8_t>& allowed, Tape<S>* tape = nullptr) {
    if (x.ndim() != 2) throw std::invalid_argument("masked_softmax_rows: need 2-d input");
    const int m = x.rows(), n = x.cols();
    if (allowed.size() != static_cast<size_t>(m) * n) throw std::invalid_argument("masked_softmax_rows: mask size mismatch");
    Tensor<S> c({m, n});
    for (int i = 0; i < m; ++i) {
        const uint8_t* arow = allowed.data() + static_cast<size_t>(i) * n;
        S mx = S(0);
        bool any = false;
        for (int j = 0; j < n; ++j)
            if (arow[j]) {
                mx = any ? std::max(mx, x.at(i, j)) : x.at(i, j);
                any = true;
            }
        if (!any) throw std::invalid_argument("masked_softmax_rows: fully masked row");
        S sum = S(0);
        for (int j = 0; j < n; ++j) {
            if (!arow[j]) continue;
            S e = std::exp(x.at(i, j) - mx);
            c.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < n; ++j)
            if (arow[j]) c.at(i, j) /= sum;
    }
    if (detail::want_grad(tape, {&x})) {
        c.ensure_grad();
        Tensor<S> xv = x, cv = c;
        std::vector<uint8_t> av = allowed;
        tape->push([xv, cv, av, m, n]() mutable {
            for (int i = 0; i < m; ++i) {
                const uint8_t* arow = av.data() + static_cast<size_t>(i) * n;
                S dot = S(0);
                for (int j = 0; j < n; ++j)
                    if (arow[j]) dot += cv.grad()[static_cast<size_t>(i) * n + j] * cv.at(i, j);
                for (int j = 0; j < n; ++j)
                    if (arow[j])
                        xv.grad()[static_cast<size_t>(i) * n + j] +=
                            cv.at(i, j) * (cv.grad()[static_cast<size_t>(i) * n + j] - dot);
            }
        });
    }
    return c;
}

// Mean negative log-likelihood over masked rows; rows outside the mask
// contribute nothing to the value or the gradient.
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const int> targets, const std::vector<uint8_t>& mask,
                        Tape<S>* tape = nullptr) {
    if (logits.ndim() != 2) throw std::invalid_argument("cross_entropy: logits must be 2-d");
    const int m = logits.rows(), vocab = logits.cols();
    if (targets.size() != static_cast<size_t>(m) || mask.size() != static_cast<size_t>(m))
        throw std::invalid_argument("cross_entropy: row count mismatch");
    int n_masked = 0;
    for (uint8_t b : mask) n_masked += b ? 1 : 0;
    if (n_masked == 0) throw std::invalid_argument("cross_entropy: empty mask");

    Tensor<S> loss({1});
    Tensor<S> probs({m, vocab});
    S total = S(0);
    for (int i = 0; i < m; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        const int t = targets[static_cast<size_t>(i)];
        if (t < 0 || t >= vocab) throw std::out_of_range("cross_entropy: target out of range");
        S mx = logits.at(i, 0);
        for (int j = 1; j < vocab; ++j) mx = std::max(mx, logits.at(i, j));
        S sum = S(0);
        for (int j = 0; j < vocab; ++j) {
            S e = std::exp(logits.at(i, j) - mx);
            probs.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < vocab; ++j) probs.at(i, j) /= sum;
        total += std::log(sum) + mx - logits.at(i, t);
    }
    loss.at(0) = total / static_cast<S>(n_masked);
    if (detail::want_grad(tape, {&logits})) {
        loss.ensure_grad();
        Tensor<S> lv = logits, pv = probs, ov = loss;
        std::vector<int> tv(targets.begin(), targets.end());
        std::vector<uint8_t> mv = mask;
        tape->push([lv, pv, ov, tv, mv, m, vocab, n_masked]() mutable {
            const S g = ov.grad()[0] / static_cast<S>(n_masked);
            for (int i = 0; i < m; ++i) {
                if (!mv[static_cast<size_t>(i)]) continue;
                for (int j = 0; j < vocab; ++j)
                    lv.grad()[static_cast<size_t>(i) * vocab + j] += g * pv.at(i, j);
                lv.grad()[static_cast<size_t>(i) * vocab + tv[static_cast<size_t>(i)]] -= g;
            }
        });
    }
    return loss;
}

// Mean over all entries (handy scalar head for gradient tests).
template <class S>
Tensor<S> mean_all(const Tensor<S>& x, Tape<S>* tape = nullptr) {
    Tensor<S> c({1});
    S sum = S(0);
    for (size_t i = 0; i < x.size(); ++i) sum += x.data()[i];
    c.at(0) = sum / static_cast<S>(x.size());
    if (detail::want_grad(tape, {&x})) {
        c.ensure_grad();
        Tensor<S> xv = x, cv = c;
        tape->push([xv, cv]() mutable {
            const S g = cv.grad()[0] / static_cast<S>(xv.size());
            for (size_t i = 0; i < xv.size(); ++i) xv.grad()[i] += g;
        });
    }
    return c;
}

}  // namespace memseeker
