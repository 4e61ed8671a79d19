#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "s2p/tensor.hpp"

namespace s2p {

// A trainable (or frozen) parameter. Sharing the same ParamT instance between
// two modules is what weight aliasing means here: both read and write the
// same storage.
template <typename T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;  // accumulated by Tape::backward, consumed by the optimizer
  bool trainable = true;

  ParamT(std::string n, TensorT<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

using Param = ParamT<float>;

// Reverse-mode autodiff tape. Nodes are created in topological order by the
// op builders below; backward() walks them in reverse. Closures capture node
// ids only and fetch values through the tape, so node storage may reallocate
// while the graph is being built.
template <typename T>
class Tape {
 public:
  using Ten = TensorT<T>;
  using ParamPtr = std::shared_ptr<ParamT<T>>;

  Tape() { nodes_.reserve(1024); }

  // --- leaves ---------------------------------------------------------
  int leaf(Ten v);                 // constant, no gradient
  int input(Ten v);                // gradient-tracked leaf (not a parameter)
  int param(const ParamPtr& p);    // snapshot of p->value; grads go to p->grad

  // --- elementwise ----------------------------------------------------
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double s);
  int add_scalar(int a, double s);
  int relu(int a);
  int leaky_relu(int a, double slope);
  int tanh_op(int a);
  int softplus(int a);             // log(1 + e^x), numerically stable
  int abs_op(int a);
  int sqrt_op(int a);              // d/dx at 0 treated as 0

  // --- layout ---------------------------------------------------------
  int concat_c(int a, int b);
  int slice_c(int a, int c0, int c1);  // channel range [c0, c1)
  int flatten(int a);                  // (N,C,H,W) -> (N,C*H*W,1,1)
  int concat_n(int a, int b);          // stack along the batch dimension
  int select_rows(int a, const std::vector<int>& rows);  // gather samples

  // --- reductions -----------------------------------------------------
  int mean_all(int a);             // -> (1,1,1,1)
  int sum_all(int a);
  int sum_c(int a);                // (N,C,H,W) -> (N,1,H,W)
  int global_avg_pool(int a);      // (N,C,H,W) -> (N,C,1,1)

  // --- structured ops -------------------------------------------------
  int conv2d(int x, int w, int b, int pad);  // stride 1, square kernel
  int linear(int x, int w, int b);           // x:(N,F,1,1) w:(O,F,1,1)
  int avg_pool2(int a);
  int upsample2(int a);                      // nearest neighbour
  int pixel_norm(int a, double eps);
  int minibatch_stddev(int a);               // appends one channel
  int gram(int a);                           // (N,C,H,W) -> (N,C,C,1)
  int log_softmax_c(int a);                  // over channels of (N,K,1,1)
  int l2norm_rows(int a);                    // rows of (N,D,1,1) to unit norm
  int detach(int a);                         // value copy, gradient barrier

  // --- engine ---------------------------------------------------------
  void backward(int root);  // root must be scalar; accumulates into params
  const Ten& val(int id) const { return nodes_[size_t(id)].value; }
  const Ten& grad(int id) const;
  bool has_grad(int id) const { return nodes_[size_t(id)].grad_init; }
  bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Ten value;
    Ten grad;
    bool needs_grad = false;
    bool grad_init = false;
    ParamPtr bound;  // set for param leaves
    std::function<void(Tape&, int)> back;
  };

  int push(Ten v, bool needs, std::function<void(Tape&, int)> back = nullptr);
  Ten& grad_buf(int id);
  void add_grad(int id, const Ten& g);

  std::vector<Node> nodes_;

  friend struct TapeOps;
};

using FTape = Tape<float>;
using DTape = Tape<double>;

}  // namespace s2p
