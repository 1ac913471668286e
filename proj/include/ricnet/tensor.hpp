#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace ricnet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Tensor storage is 64-byte aligned. Eigen peels scalar iterations off
// vectorized loops according to the runtime address, so a fixed alignment
// keeps results bit-identical regardless of heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), kAlignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node&)>;

// One vertex of the dynamic tape. Interior nodes keep their inputs alive
// and a closure that pushes `grad` into the inputs' grad buffers.
struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward_fn;

  Buffer& ensure_grad();
  bool is_leaf() const { return inputs.empty(); }
};

}  // namespace detail

// Dense row-major float64 array with optional reverse-mode gradient tracking.
// Copies are shallow: two Tensor handles may refer to the same node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Extent of `axis`; negative values count from the end.
  std::size_t dim(std::ptrdiff_t axis) const;

  std::span<const double> data() const;
  // Writable view. Only meaningful on leaves (parameters, inputs).
  std::span<double> data_mut();
  std::vector<double> to_vector() const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  // Gradient buffer; zero-filled if nothing has been propagated into it.
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  // New leaf holding a copy of the values, cut from any graph.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  // Internal: wraps a freshly computed value. When grad mode is on and any
  // input requires grad, the result records `inputs` and `fn`.
  static Tensor from_op(Shape shape, Buffer values, const char* op, std::initializer_list<Tensor> inputs,
                        detail::BackwardFn fn);
  static Tensor from_op(Shape shape, Buffer values, const char* op, const std::vector<Tensor>& inputs,
                        detail::BackwardFn fn);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Gradient recording is on by default and is per thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered view of the tape reachable from a root tensor.
class ComputationGraph {
 public:
  struct Record {
    std::string op;
    std::size_t id = 0;
    std::vector<std::size_t> inputs;
  };

  static ComputationGraph trace(const Tensor& root);

  // Every node appears once and after all of its inputs.
  const std::vector<detail::Node*>& order() const { return order_; }
  std::vector<Record> records() const;
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<detail::Node*> order_;
};

// Reverse sweep from a scalar loss. Gradients accumulate into leaves.
void backward(const Tensor& loss);

}  // namespace ricnet
