#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace ccnn {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. The handle shares storage; forward
// values are treated as immutable once an op has consumed them. `grad` is
// allocated (zero-filled) iff requires_grad is set.
class Tensor {
public:
    struct Storage {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(s_); }
    const Shape& shape() const { return s_->shape; }
    int rank() const { return static_cast<int>(s_->shape.size()); }
    int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return s_->values.size(); }

    std::vector<double>& values() { return s_->values; }
    const std::vector<double>& values() const { return s_->values; }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    bool requires_grad() const { return s_ && s_->requires_grad; }
    void set_requires_grad(bool on);
    void zero_grad();

    double item() const;

    double& at(int i) { return s_->values[static_cast<std::size_t>(i)]; }
    double at(int i) const { return s_->values[static_cast<std::size_t>(i)]; }
    double& at(int i, int j);
    double at(int i, int j) const;
    double& at(int i, int j, int k);
    double at(int i, int j, int k) const;

    // Identity of the underlying storage; used as gradient-map key.
    const void* key() const { return s_.get(); }
    Storage* storage() const { return s_.get(); }

private:
    std::shared_ptr<Storage> s_;
};

// Accumulates gradients during one backward pass, keyed by tensor storage.
class GradMap {
public:
    std::vector<double>& at_or_create(const Tensor& t);
    const std::vector<double>* find(const Tensor& t) const;
    void clear() { map_.clear(); }

    // Adds every recorded gradient into the owning tensor's grad accumulator
    // (only tensors with requires_grad participate).
    void fold_into_tensors();

private:
    struct Slot {
        Tensor tensor;
        std::vector<double> grad;
    };
    std::unordered_map<const void*, Slot> map_;
};

// Ordered record of executed operations. Ops append themselves while a
// TapeScope is active; backward replays entries in exact reverse order and
// clears the tape afterwards.
class Tape {
public:
    struct Entry {
        std::function<void(GradMap&)> apply;
    };

    void record(Entry entry) { entries_.push_back(std::move(entry)); }
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    // Seeds d(loss)/d(loss) = 1, replays in reverse, folds results into the
    // tensors' grad accumulators, then clears the tape.
    void backward(const Tensor& loss);

    // Same replay, but gradients are left in `out` instead of being folded
    // into tensor accumulators (used for per-example isolation).
    void backward_into(const Tensor& loss, GradMap& out);

    static Tape* current();

private:
    void replay(const Tensor& loss, GradMap& grads);
    std::vector<Entry> entries_;
    friend class TapeScope;
};

// RAII activation of a tape on the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

}  // namespace ccnn
