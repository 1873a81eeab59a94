#pragma once

#include "sodkit/tensor.hpp"

namespace sodkit {

enum class Act { Relu, LeakyRelu, Gelu, Sigmoid };

Act act_from_string(const std::string& name);

constexpr double kLeakySlope = 0.01;
constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;
constexpr double kLayerNormEps = 1e-5;

// ---- elementwise / scalar ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
// scale * x + shift, elementwise
Value affine(const Value& x, double scale, double shift);
Value activation(const Value& x, Act kind);
Value sigmoid(const Value& x);

// broadcast add of p with leading axis 1 onto x (e.g. positional bias)
Value add_broadcast0(const Value& x, const Value& p);

// ---- reductions ----
Value sum_all(const Value& x);
Value mean_all(const Value& x);

// ---- shape ----
Value reshape(const Value& x, Shape s);
Value permute(const Value& x, const std::vector<int>& perm);
// concatenate along axis 1 (channels of NCHW or features of [B,N,C])
Value concat_axis1(const std::vector<Value>& xs);

// ---- linear algebra ----
// a:[m,k] b:[k,n]
Value matmul(const Value& a, const Value& b);
// batched: a:[G,N,K], b:[G,K,M] (or [G,M,K] with transpose_b)
Value bmm(const Value& a, const Value& b, bool transpose_b = false);
// x:[...,K] -> [...,M]; w:[K,M], b:[M] or nullptr
Value linear(const Value& x, const Value& w, const Value& b);

// ---- nn primitives ----
Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad);

struct BatchNormBuffers {
    Value running_mean;  // [C], not trainable
    Value running_var;   // [C], not trainable
};
Value batch_norm(const Value& x, const Value& gamma, const Value& beta,
                 BatchNormBuffers& buffers, bool train);

// normalization over the trailing axis
Value layer_norm(const Value& x, const Value& gamma, const Value& beta);
Value softmax_lastdim(const Value& x);

// ---- resampling ----
Value pixel_unshuffle(const Value& x, int r);
Value pixel_shuffle(const Value& x, int r);
Value bilinear_resize(const Value& x, int out_h, int out_w);

// ---- losses (scalar outputs) ----
// mean BCE over all elements; gt entries must be in [0,1]
Value bce_mean(const Value& p, const std::vector<double>& gt);
// BCE weighted per element by w (non-negative), normalized by sum(w)
Value weighted_bce_raw(const Value& p, const std::vector<double>& gt,
                       const std::vector<double>& w);

// ---- optimizer ----
struct AdamState {
    std::vector<double> m, v;
    long long t = 0;
};
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr);

}  // namespace sodkit
