#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "memseeker/stats.hpp"

namespace memseeker {

namespace detail {
template <class S>
struct Buf {
    std::vector<S> v;
    explicit Buf(size_t n) : v(n, S(0)) { AllocStats::note_alloc(static_cast<long long>(n)); }
    ~Buf() { AllocStats::note_free(static_cast<long long>(v.size())); }
    Buf(const Buf&) = delete;
    Buf& operator=(const Buf&) = delete;
};
}  // namespace detail

// Dense row-major tensor. Copies are shallow (buffers are shared); ops never
// mutate their inputs, so sharing is safe. The grad buffer is optional and has
// the same extent as data when present.
template <class S>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
        data_ = std::make_shared<detail::Buf<S>>(count(dims_));
    }
    Tensor(std::vector<int> dims, std::initializer_list<S> vals) : Tensor(std::move(dims)) {
        if (vals.size() != size()) throw std::invalid_argument("tensor init size mismatch");
        size_t i = 0;
        for (S v : vals) data()[i++] = v;
    }

    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
    static Tensor full(std::vector<int> dims, S value) {
        Tensor t(std::move(dims));
        for (size_t i = 0; i < t.size(); ++i) t.data()[i] = value;
        return t;
    }
    static Tensor scalar(S value) { return full({1}, value); }

    bool defined() const { return static_cast<bool>(data_); }
    const std::vector<int>& dims() const { return dims_; }
    int ndim() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    size_t size() const { return data_ ? data_->v.size() : 0; }

    int rows() const { return dims_.empty() ? 0 : dims_[0]; }
    int cols() const {
        if (dims_.size() == 1) return 1;
        if (dims_.size() == 2) return dims_[1];
        throw std::logic_error("cols() on tensor with ndim > 2");
    }

    S* data() { return data_->v.data(); }
    const S* data() const { return data_->v.data(); }
    S& at(int i) { return data_->v[static_cast<size_t>(i)]; }
    S at(int i) const { return data_->v[static_cast<size_t>(i)]; }
    S& at(int i, int j) { return data_->v[static_cast<size_t>(i) * cols() + j]; }
    S at(int i, int j) const { return data_->v[static_cast<size_t>(i) * cols() + j]; }

    bool has_grad() const { return static_cast<bool>(grad_); }
    S* grad() { return grad_->v.data(); }
    const S* grad() const { return grad_->v.data(); }
    void ensure_grad() {
        if (!grad_) grad_ = std::make_shared<detail::Buf<S>>(size());
    }
    void zero_grad() {
        if (grad_) std::fill(grad_->v.begin(), grad_->v.end(), S(0));
    }
    void drop_grad() { grad_.reset(); }

    // Shares data, forgets the grad buffer: a stop-gradient view.
    Tensor detached() const {
        Tensor t;
        t.dims_ = dims_;
        t.data_ = data_;
        return t;
    }

    // Deep copy of the data buffer (no grad).
    Tensor clone() const {
        Tensor t(dims_);
        t.data_->v = data_->v;
        return t;
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    bool all_finite() const {
        for (size_t i = 0; i < size(); ++i)
            if (!std::isfinite(static_cast<double>(data()[i]))) return false;
        return true;
    }

    static size_t count(const std::vector<int>& dims) {
        size_t n = 1;
        for (int d : dims) {
            if (d < 0) throw std::invalid_argument("negative tensor extent");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

  private:
    std::vector<int> dims_;
    std::shared_ptr<detail::Buf<S>> data_;
    std::shared_ptr<detail::Buf<S>> grad_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

#ifdef MEMSEEKER_F64
using Scalar = double;
#else
using Scalar = float;
#endif

}  // namespace memseeker
