#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mugl/tensor.hpp"

namespace mugl {

/// Named parameter tensors with gradient accumulators and Adam moments.
/// Entries keep insertion order, which fixes checkpoint layout and update
/// order, so runs are reproducible.
class ParameterStore {
public:
    int add(const std::string& name, Tensor init);
    int handle(const std::string& name) const; // -1 when absent

    Tensor& value(int h) { return entries_[static_cast<std::size_t>(h)].value; }
    const Tensor& value(int h) const { return entries_[static_cast<std::size_t>(h)].value; }
    Tensor& grad(int h) { return entries_[static_cast<std::size_t>(h)].grad; }
    const Tensor& grad(int h) const { return entries_[static_cast<std::size_t>(h)].grad; }
    const std::string& name(int h) const { return entries_[static_cast<std::size_t>(h)].name; }

    std::size_t count() const { return entries_.size(); }
    std::int64_t total_parameters() const;

    void zero_grad();
    double grad_norm() const;

    /// One Adam update over every entry; when clip > 0 the gradients are
    /// first rescaled so their global norm does not exceed it.
    void adam_step(double lr, double beta1, double beta2, double eps, double clip);
    void reset_optimizer();

    /// Binary checkpoint: "MUGLCKPT", u32 version, then per parameter a
    /// length-prefixed name, u32 rank, u32 dims and a float32 payload, all
    /// little-endian. Records run to end of file.
    void save(const std::string& path) const;

    /// Into an empty store: recreate entries. Into a populated store: strict
    /// name + shape match (any mismatch throws CorruptArchive).
    void load(const std::string& path);

private:
    struct Entry {
        std::string name;
        Tensor value, grad, m, v;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
    std::int64_t step_ = 0;
};

} // namespace mugl
