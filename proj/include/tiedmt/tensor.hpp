#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tiedmt {

#ifdef TIEDMT_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

// One storage node of the graph. Values are written once during the forward
// pass; only the grad buffer mutates afterwards.
struct TensorNode {
  std::vector<int> shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated lazily, zero-filled
  bool requires_grad = false;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real{0});
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, Real v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<Real> data,
                     bool requires_grad = false);
  static Tensor scalar_value(Real v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t size() const { return node_->size(); }

  // 2-D accessors; throw on other ranks.
  int rows() const;
  int cols() const;

  std::vector<Real>& data() { return node_->value; }
  const std::vector<Real>& data() const { return node_->value; }
  std::vector<Real>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<Real>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), Real{0});
  }

  Real item() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

  // Storage identity (used by parameter sharing checks).
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Records the backward step of every differentiable op in execution order.
// Creation order is a topological order of the graph, so replaying the
// entries back-to-front visits each op exactly once in reverse topological
// order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_step) {
    entries_.push_back(std::move(backward_step));
  }
  size_t num_entries() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape. `loss` must be a scalar.
  void backward(const Tensor& loss);

  static Tape* current();

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> entries_;
};

// RAII activation of a tape on the current thread. Ops executed while a tape
// is active record their backward steps on it; with no active tape they run
// forward-only.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

[[noreturn]] inline void tensor_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

}  // namespace tiedmt
