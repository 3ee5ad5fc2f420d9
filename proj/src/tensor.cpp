#include "tiedmt/tensor.hpp"

#include <numeric>

namespace tiedmt {

namespace {

thread_local Tape* g_active_tape = nullptr;

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) tensor_error("tensor extents must be positive");
    n *= d;
  }
  return n;
}

std::shared_ptr<TensorNode> make_node(std::vector<int> shape, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  int64_t n = shape_product(shape);
  auto node = make_node(std::move(shape), requires_grad);
  node->value.assign(static_cast<size_t>(n), Real{0});
  return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, Real v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& x : t.data()) x = v;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<Real> data,
                    bool requires_grad) {
  int64_t n = shape_product(shape);
  if (n != static_cast<int64_t>(data.size()))
    tensor_error("tensor data length does not match shape");
  auto node = make_node(std::move(shape), requires_grad);
  node->value = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar_value(Real v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

int Tensor::rows() const {
  if (node_->shape.size() != 2) tensor_error("rows(): tensor is not 2-D");
  return node_->shape[0];
}

int Tensor::cols() const {
  if (node_->shape.size() != 2) tensor_error("cols(): tensor is not 2-D");
  return node_->shape[1];
}

Real Tensor::item() const {
  if (size() != 1) tensor_error("item(): tensor is not a scalar");
  return node_->value[0];
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    tensor_error("backward: loss must be a scalar");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += Real{1};
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

Tape* Tape::current() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

}  // namespace tiedmt
