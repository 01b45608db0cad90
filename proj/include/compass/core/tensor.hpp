#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "compass/core/error.hpp"
#include "compass/core/rng.hpp"

namespace compass {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

enum class Mode { train, eval };

// Dense row-major 64-bit tensor. Copies are shallow: they share both the
// value buffer and the gradient slot, so a gradient written through one
// copy is visible through all of them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(shape_size(t.shape_), 0.0);
    t.grad_slot_ = std::make_shared<GradSlot>();
    t.requires_grad_ = requires_grad;
    return t;
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : *t.data_) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_size(shape) != data.size())
      throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " does not match " +
                                  std::to_string(data.size()) + " values");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(data));
    t.grad_slot_ = std::make_shared<GradSlot>();
    t.requires_grad_ = requires_grad;
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) { return full({}, v, requires_grad); }

  static Tensor eye(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) (*t.data_)[i * n + i] = 1.0;
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, double sd = 1.0, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : *t.data_) x = rng.normal(0.0, sd);
    return t;
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }

  std::size_t rows() const {
    require_rank2("rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank2("cols");
    return shape_[1];
  }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& vec() { return *data_; }
  const std::vector<double>& vec() const { return *data_; }

  double value() const {
    if (size() != 1) throw std::invalid_argument("Tensor::value: tensor has " + std::to_string(size()) + " elements");
    return (*data_)[0];
  }
  double at(std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t i, std::size_t j) const {
    require_rank2("at");
    return (*data_)[i * shape_[1] + j];
  }
  double& at(std::size_t i) { return (*data_)[i]; }
  double& at(std::size_t i, std::size_t j) {
    require_rank2("at");
    return (*data_)[i * shape_[1] + j];
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  // Identity of the underlying buffer; stable across shallow copies.
  const void* id() const { return data_.get(); }

  bool has_grad() const { return grad_slot_ && grad_slot_->buf != nullptr; }

  // Gradient values; zeros when no gradient has been accumulated.
  std::vector<double> grad() const {
    if (has_grad()) return *grad_slot_->buf;
    return std::vector<double>(size(), 0.0);
  }

  void zero_grad() const {
    if (grad_slot_) grad_slot_->buf = nullptr;
  }

  // Accumulation target used by backward rules. The slot lives behind a
  // shared pointer, so shallow copies all observe the same gradient.
  std::vector<double>& grad_acc() const {
    if (!grad_slot_) throw std::logic_error("Tensor::grad_acc on undefined tensor");
    if (!grad_slot_->buf) grad_slot_->buf = std::make_shared<std::vector<double>>(size(), 0.0);
    return *grad_slot_->buf;
  }

  // Deep copy of values; gradient state is not copied.
  Tensor clone() const {
    Tensor t = zeros(shape_, requires_grad_);
    *t.data_ = *data_;
    return t;
  }

  // Overwrites values in place, preserving buffer identity (shared views
  // keep seeing this tensor's contents).
  void copy_from(const Tensor& other) {
    if (other.size() != size())
      throw std::invalid_argument("Tensor::copy_from: size mismatch " + shape_str(shape_) + " vs " +
                                  shape_str(other.shape_));
    *data_ = *other.data_;
  }

 private:
  struct GradSlot {
    std::shared_ptr<std::vector<double>> buf;
  };

  void require_rank2(const char* what) const {
    if (shape_.size() != 2) throw std::invalid_argument(std::string("Tensor::") + what + ": tensor is not rank-2");
  }

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<GradSlot> grad_slot_;
  bool requires_grad_ = false;
};

// Reverse-mode tape. Forward ops append entries while a tape is active;
// backward() replays them in reverse. One execution context per tape.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;
  ~GradTape() {
    if (active_) pop_current(this);
  }

  class Scope {
   public:
    explicit Scope(GradTape* t) : tape_(t) { push_current(t); }
    ~Scope() { pop_current(tape_); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* tape_;
  };

  static GradTape* current() { return tls_current(); }

  // Records one executed op. Gradient buffers for the output and all inputs
  // are materialized now so reverse replay can accumulate unconditionally.
  void record(std::function<void()> backward_rule, const std::vector<Tensor>& inputs, Tensor& out) {
    out.grad_acc();
    for (Tensor t : inputs) {
      t.grad_acc();
      if (t.requires_grad()) leaves_.push_back(t);
    }
    entries_.push_back(Entry{std::move(backward_rule)});
  }

  void record(std::function<void()> backward_rule, std::initializer_list<Tensor> inputs, Tensor& out) {
    record(std::move(backward_rule), std::vector<Tensor>(inputs), out);
  }

  std::size_t num_entries() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays recorded rules newest-first.
  // Every requires_grad tensor seen by the tape ends with a gradient
  // buffer (zeros when it is not on a path to the loss).
  void backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    Tensor seed = loss;
    seed.grad_acc()[0] += 1.0;
    for (std::size_t i = entries_.size(); i-- > 0;) entries_[i].backward_rule();
    for (Tensor& t : leaves_) t.grad_acc();
  }

 private:
  struct Entry {
    std::function<void()> backward_rule;
  };

  static GradTape*& tls_current() {
    thread_local GradTape* cur = nullptr;
    return cur;
  }
  static void push_current(GradTape* t) {
    t->parent_ = tls_current();
    t->active_ = true;
    tls_current() = t;
  }
  static void pop_current(GradTape* t) {
    if (tls_current() == t) {
      tls_current() = t->parent_;
      t->active_ = false;
    }
  }

  std::vector<Entry> entries_;
  std::vector<Tensor> leaves_;
  GradTape* parent_ = nullptr;
  bool active_ = false;
};

inline void backward(GradTape& tape, const Tensor& loss) { tape.backward(loss); }

}  // namespace compass
