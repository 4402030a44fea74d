#pragma once

// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a graph node holding row-major data,
// an optional gradient buffer and a backward closure. Graphs are built
// eagerly by the free functions below and differentiated by backward().
// All arithmetic is double precision.

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qalab {

struct TensorNode;
using Tensor = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated during backward()
    bool requires_grad{false};

    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backward_fn;  // scatter node.grad into parents

    std::size_t numel() const { return data.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool is_scalar() const { return data.size() == 1; }
};

// ---- construction ----

Tensor make_tensor(std::vector<int> shape, std::vector<double> data,
                   bool requires_grad = false);
Tensor scalar_tensor(double v, bool requires_grad = false);
Tensor zeros(std::vector<int> shape, bool requires_grad = false);
Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
// normal(0, stddev) init
Tensor randn(std::vector<int> shape, double stddev, std::mt19937_64& rng,
             bool requires_grad = false);
// uniform in [lo, hi]
Tensor rand_uniform(std::vector<int> shape, double lo, double hi,
                    std::mt19937_64& rng, bool requires_grad = false);

// ---- elementwise / structural ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// adds a length-n row vector to every row of an m-by-n matrix
Tensor add_row_broadcast(const Tensor& m, const Tensor& row);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// softmax over the last axis, max-subtracted
Tensor softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// row i of a matrix as a 1-by-n tensor
Tensor row(const Tensor& a, int i);
// rows [r0, r1) of a matrix
Tensor slice_rows(const Tensor& a, int r0, int r1);
// columns [c0, c1) of a matrix
Tensor slice_cols(const Tensor& a, int c0, int c1);
// stack 1-by-n rows into an m-by-n matrix
Tensor concat_rows(const std::vector<Tensor>& rows);
// [a | b] along columns; both m-by-*
Tensor concat_cols(const Tensor& a, const Tensor& b);
// append the same row vector to every row: [m x d] + [k] -> [m x (d+k)]
Tensor concat_cols_broadcast(const Tensor& m, const Tensor& vec);
// gather rows of an embedding table; backward scatter-adds
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// inverted dropout: scales kept activations by 1/(1-p) at train time
Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng);

// identity forward; backward multiplies the incoming gradient by -lambda
Tensor grad_reverse(const Tensor& a, double lambda);

// ---- losses ----

// mean over the batch of -w[y] * log softmax(logits)[y]; log-softmax fused
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<double>& class_weights = {});
// mean of -[w*y*log sigma(z) + (1-y)*log(1-sigma(z))], fused with the sigmoid
Tensor binary_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            double pos_weight = 1.0);

// ---- autodiff driver ----

// Reverse-mode sweep from a scalar root. Gradients accumulate (sum) when a
// tensor feeds several consumers. Leaves with requires_grad get .grad filled.
void backward(const Tensor& root);

// throws std::runtime_error if any value is NaN or Inf
void check_finite(const Tensor& t, const std::string& what);

// ---- gradient checking ----

// Compares reverse-mode gradients of a scalar-valued function against
// central finite differences (step eps) and returns the max relative error.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace qalab
