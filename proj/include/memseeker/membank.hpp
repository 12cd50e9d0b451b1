#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "memseeker/tensor.hpp"

namespace memseeker {

template <class S>
struct KV {
    Tensor<S> k;
    Tensor<S> v;
};

// Append-only per-layer store of memory-token key/value states. Entries are
// immutable once appended; every layer always holds the same number of rows.
// Tensors are kept per appended segment so training can backpropagate through
// individual contributions.
template <class S>
class MemoryBank {
  public:
    struct LayerStore {
        std::vector<Tensor<S>> keys;
        std::vector<Tensor<S>> values;
    };

    MemoryBank() = default;
    explicit MemoryBank(int n_layers) : layers_(static_cast<size_t>(n_layers)) {
        if (n_layers < 1) throw std::invalid_argument("MemoryBank: n_layers must be >= 1");
    }

    int n_layers() const { return static_cast<int>(layers_.size()); }
    int entries() const { return offsets_.back(); }  // P
    int segments() const { return static_cast<int>(offsets_.size()) - 1; }
    const std::vector<int>& segment_offsets() const { return offsets_; }
    const std::vector<int>& positions() const { return positions_; }
    const LayerStore& layer(int l) const { return layers_[static_cast<size_t>(l)]; }

    void append(const std::vector<KV<S>>& kv_per_layer, std::span<const int> token_positions) {
        if (kv_per_layer.size() != layers_.size()) throw std::runtime_error("MemoryBank: layer count mismatch on append");
        const int k = kv_per_layer.empty() ? 0 : kv_per_layer[0].k.rows();
        if (k < 1) throw std::invalid_argument("MemoryBank: append needs k >= 1 rows");
        if (static_cast<int>(token_positions.size()) != k) throw std::invalid_argument("MemoryBank: position count mismatch");
        for (const auto& kv : kv_per_layer)
            if (kv.k.rows() != k || kv.v.rows() != k || kv.k.cols() != kv.v.cols())
                throw std::runtime_error("MemoryBank: inconsistent KV shapes on append");
        for (size_t l = 0; l < layers_.size(); ++l) {
            layers_[l].keys.push_back(kv_per_layer[l].k);
            layers_[l].values.push_back(kv_per_layer[l].v);
        }
        offsets_.push_back(offsets_.back() + k);
        positions_.insert(positions_.end(), token_positions.begin(), token_positions.end());
    }

    void clear() {
        for (auto& l : layers_) {
            l.keys.clear();
            l.values.clear();
        }
        offsets_.assign(1, 0);
        positions_.clear();
    }

  private:
    std::vector<LayerStore> layers_;
    std::vector<int> offsets_{0};
    std::vector<int> positions_;
};

template <class S>
MemoryBank<S> bank_new(int n_layers) {
    return MemoryBank<S>(n_layers);
}

// Snapshots are plain value copies; stored tensors are immutable, so the
// copied handle lists restore the exact bytes.
template <class S>
MemoryBank<S> bank_snapshot(const MemoryBank<S>& bank) {
    return bank;
}

template <class S>
bool banks_equal(const MemoryBank<S>& a, const MemoryBank<S>& b) {
    if (a.n_layers() != b.n_layers() || a.segment_offsets() != b.segment_offsets() || a.positions() != b.positions())
        return false;
    for (int l = 0; l < a.n_layers(); ++l) {
        const auto& la = a.layer(l);
        const auto& lb = b.layer(l);
        if (la.keys.size() != lb.keys.size()) return false;
        for (size_t s = 0; s < la.keys.size(); ++s) {
            for (auto [ta, tb] : {std::pair{&la.keys[s], &lb.keys[s]}, std::pair{&la.values[s], &lb.values[s]}}) {
                if (!ta->same_shape(*tb)) return false;
                for (size_t i = 0; i < ta->size(); ++i)
                    if (ta->data()[i] != tb->data()[i]) return false;
            }
        }
    }
    return true;
}

}  // namespace memseeker
