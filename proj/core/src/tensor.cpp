#include "ccnn/tensor.hpp"

#include <sstream>

#include "ccnn/errors.hpp"

namespace ccnn {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void check_shape(const Shape& shape) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor shape has non-positive extent " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    check_shape(shape);
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->values.assign(shape_numel(t.s_->shape), 0.0);
    t.s_->requires_grad = requires_grad;
    if (requires_grad) t.s_->grad.assign(t.s_->values.size(), 0.0);
    return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.s_->values) v = value;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (values.size() != shape_numel(shape)) {
        throw DimensionError("tensor data size " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->values = std::move(values);
    t.s_->requires_grad = requires_grad;
    if (requires_grad) t.s_->grad.assign(t.s_->values.size(), 0.0);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from(Shape{}, {value}, requires_grad);
}

std::vector<double>& Tensor::grad() {
    if (!requires_grad()) throw NumericError("grad requested on tensor without requires_grad");
    return s_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!requires_grad()) throw NumericError("grad requested on tensor without requires_grad");
    return s_->grad;
}

void Tensor::set_requires_grad(bool on) {
    s_->requires_grad = on;
    if (on && s_->grad.size() != s_->values.size()) {
        s_->grad.assign(s_->values.size(), 0.0);
    }
    if (!on) s_->grad.clear();
}

void Tensor::zero_grad() {
    if (requires_grad()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return s_->values[0];
}

double& Tensor::at(int i, int j) {
    return s_->values[static_cast<std::size_t>(i) * static_cast<std::size_t>(s_->shape[1]) +
                      static_cast<std::size_t>(j)];
}

double Tensor::at(int i, int j) const {
    return s_->values[static_cast<std::size_t>(i) * static_cast<std::size_t>(s_->shape[1]) +
                      static_cast<std::size_t>(j)];
}

double& Tensor::at(int i, int j, int k) {
    const std::size_t d1 = static_cast<std::size_t>(s_->shape[1]);
    const std::size_t d2 = static_cast<std::size_t>(s_->shape[2]);
    return s_->values[(static_cast<std::size_t>(i) * d1 + static_cast<std::size_t>(j)) * d2 +
                      static_cast<std::size_t>(k)];
}

double Tensor::at(int i, int j, int k) const {
    const std::size_t d1 = static_cast<std::size_t>(s_->shape[1]);
    const std::size_t d2 = static_cast<std::size_t>(s_->shape[2]);
    return s_->values[(static_cast<std::size_t>(i) * d1 + static_cast<std::size_t>(j)) * d2 +
                      static_cast<std::size_t>(k)];
}

std::vector<double>& GradMap::at_or_create(const Tensor& t) {
    auto it = map_.find(t.key());
    if (it == map_.end()) {
        Slot slot;
        slot.tensor = t;
        slot.grad.assign(t.size(), 0.0);
        it = map_.emplace(t.key(), std::move(slot)).first;
    }
    return it->second.grad;
}

const std::vector<double>* GradMap::find(const Tensor& t) const {
    auto it = map_.find(t.key());
    return it == map_.end() ? nullptr : &it->second.grad;
}

void GradMap::fold_into_tensors() {
    for (auto& [key, slot] : map_) {
        (void)key;
        if (!slot.tensor.requires_grad()) continue;
        auto& acc = slot.tensor.grad();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += slot.grad[i];
    }
}

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape* Tape::current() { return g_current_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }

TapeScope::~TapeScope() { g_current_tape = previous_; }

void Tape::replay(const Tensor& loss, GradMap& grads) {
    if (loss.size() != 1) {
        throw DimensionError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    grads.at_or_create(loss)[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        it->apply(grads);
    }
    clear();
}

void Tape::backward(const Tensor& loss) {
    GradMap grads;
    replay(loss, grads);
    grads.fold_into_tensors();
}

void Tape::backward_into(const Tensor& loss, GradMap& out) {
    replay(loss, out);
}

}  // namespace ccnn
