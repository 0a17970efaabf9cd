#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "agcd/tensor.hpp"

// Deterministic differentiable-operator set. Every forward op has a matching
// backward companion that accumulates into caller-provided gradient tensors;
// model code composes them explicitly in reverse order (there is no graph
// autodiff here).
namespace agcd::num {

enum class Axis { Rows, Cols };

Tensor matmul(const Tensor& a, const Tensor& b);
// Accumulates dA += dOut * B^T and dB += A^T * dOut.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& d_out,
                     Tensor& d_a, Tensor& d_b);

Tensor transpose(const Tensor& m);

Tensor softmax_rows(const Tensor& m);
// y is the softmax output; returns dX.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);

// g has shape {h, w, d}; s must divide h and w.
Tensor avg_pool_grid(const Tensor& g, std::size_t s);
// d_out has the pooled shape; returns the gradient at input resolution.
Tensor avg_pool_grid_backward(const Tensor& d_out, std::size_t s);

Tensor broadcast_scale(const Tensor& m, const Tensor& w, Axis axis);
void broadcast_scale_backward(const Tensor& m, const Tensor& w, Axis axis,
                              const Tensor& d_out, Tensor& d_m, Tensor& d_w);

Tensor add(const Tensor& a, const Tensor& b);
// out[i,j] = m[i,j] + b[j]
Tensor add_row_broadcast(const Tensor& m, const Tensor& b);

Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

struct LayerNormCache {
    Tensor x;
    std::vector<double> mean;
    std::vector<double> rstd;
};
// Row-wise layer norm with learnable per-column gain/bias; eps inside sqrt.
Tensor layernorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      LayerNormCache* cache);
Tensor layernorm_rows_backward(const LayerNormCache& cache, const Tensor& gamma,
                               const Tensor& dy, Tensor& d_gamma, Tensor& d_beta);

struct Param {
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

// Named learnable parameters with gradients. std::map keeps iteration order
// deterministic, which fixes the update and gradient-check ordering.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t, bool trainable = true);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    void zero_grads();
    std::size_t scalar_count() const;
    std::vector<std::string> names() const;
    std::map<std::string, Param>& entries() { return entries_; }
    const std::map<std::string, Param>& entries() const { return entries_; }

private:
    std::map<std::string, Param> entries_;
};

struct AdamState {
    std::map<std::string, std::pair<Tensor, Tensor>> moments;  // (m, v)
    long step = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected adaptive-moment update; non-trainable entries untouched.
void adam_step(ParamStore& params, AdamState& state, const AdamConfig& cfg);

struct GradCheckReport {
    std::map<std::string, double> max_rel_error;
    double tolerance = 0.0;
    bool pass = false;
    double worst = 0.0;
    std::string worst_param;
};

// Central-difference check of the analytic gradients already stored in
// `params`. loss_fn must recompute the scalar loss from current values without
// touching the gradients. Relative error denominator: max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           ParamStore& params, double eps, double tol);

}  // namespace agcd::num
