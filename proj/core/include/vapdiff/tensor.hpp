#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vapdiff/common.hpp"

namespace vapdiff {

// Reverse-mode autodiff over row-major matrices of doubles. Every tensor is a
// (rows, cols) matrix; vectors are (1, n) rows and scalars are (1, 1). The
// graph is built eagerly per forward pass and freed when the handles drop.
//
// Shapes are small and the workloads are desk scale, so the engine favors
// exact, deterministic arithmetic over throughput tricks: fixed accumulation
// order, no fused-multiply reassociation, single-threaded.

class Tensor;

struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backward_fn;
    uint64_t id = 0;  // creation order, used for topological sort
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(int rows, int cols, bool requires_grad = false);
    static Tensor full(int rows, int cols, double fill, bool requires_grad = false);
    static Tensor from_values(int rows, int cols, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor randn(int rows, int cols, RandomStream& rng, double scale = 1.0,
                        bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    int size() const { return node_->rows * node_->cols; }

    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& mutable_value() { return node_->value; }
    double item() const;
    double at(int r, int c) const { return node_->value[static_cast<size_t>(r) * node_->cols + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    const std::vector<double>& grad() const;
    void zero_grad();

    // Runs reverse-mode accumulation from this (scalar) tensor.
    void backward();

    TensorNode* node() const { return node_.get(); }

private:
    friend Tensor make_op(int rows, int cols, std::vector<Tensor> parents,
                          std::function<void(TensorNode&)> backward_fn);
    std::shared_ptr<TensorNode> node_;
};

// Disables graph construction within a scope; forward passes become plain
// numeric evaluation. Used for sampling and evaluation.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
// x: (n, in), w: (in, out), bias: (1, out) broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
// Adds row vector (1, c) to every row of x (n, c).
Tensor broadcast_add_row(const Tensor& x, const Tensor& row);

// Nonlinearities / normalization
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
// Per-row layer norm with learned gain/bias (each (1, c)).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);

// Scaled dot-product attention over row-token matrices. q: (nq, d),
// k, v: (nk, d); d must divide evenly by heads, each head attends over its
// contiguous column slice. Returns (nq, d).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

// Structural ops
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int start, int count);
Tensor mean_rows(const Tensor& x);  // (n, c) -> (1, c)
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, int rows, int cols);
// Row `index` of table (n, c) as a (1, c) tensor; gradient scatters into the row.
Tensor embed_row(const Tensor& table, int index);
Tensor detach(const Tensor& x);

// Losses
Tensor mse(const Tensor& a, const Tensor& b);  // mean over all elements
Tensor sum_all(const Tensor& x);
// logits: (n, c); targets: n class indices. Mean cross entropy.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Raw kernels (also used by non-graph numeric code).
void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n);
// c(m,k) += a(m,n) * b(k,n)^T
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int n, int k);
// c(k,n) += a(m,k)^T * b(m,n)
void matmul_tn_acc(const double* a, const double* b, double* c, int k, int m, int n);

}  // namespace vapdiff
