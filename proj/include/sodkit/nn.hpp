#pragma once

#include "sodkit/params.hpp"

namespace sodkit {

struct LinearLayer {
    Value w, b;

    LinearLayer() = default;
    LinearLayer(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
        w = store.param(name + ".w", {in, out}, rng, std::sqrt(2.0 / (in + out)));
        b = store.param_const(name + ".b", {out}, 0.0);
    }

    Value operator()(const Value& x) const { return linear(x, w, b); }
};

struct LayerNormLayer {
    Value gamma, beta;

    LayerNormLayer() = default;
    LayerNormLayer(ParamStore& store, const std::string& name, int dim) {
        gamma = store.param_const(name + ".gamma", {dim}, 1.0);
        beta = store.param_const(name + ".beta", {dim}, 0.0);
    }

    Value operator()(const Value& x) const { return layer_norm(x, gamma, beta); }
};

// Plain convolution with bias (prediction heads, channel-adjusting 1x1).
struct ConvLayer {
    Value w, b;
    int pad = 0;

    ConvLayer() = default;
    ConvLayer(ParamStore& store, const std::string& name, int in, int out, int k, Rng& rng)
        : pad((k - 1) / 2) {
        w = store.param(name + ".w", {out, in, k, k}, rng, std::sqrt(2.0 / (in * k * k)));
        b = store.param_const(name + ".b", {out}, 0.0);
    }

    Value operator()(const Value& x) const { return conv2d(x, w, b, 1, pad); }
};

// Conv -> BatchNorm -> LeakyReLU, the fusion unit used throughout the decoder
// and global branch.
struct ConvBNAct {
    Value w;
    Value gamma, beta;
    BatchNormBuffers buffers;
    int pad = 0;

    ConvBNAct() = default;
    ConvBNAct(ParamStore& store, const std::string& name, int in, int out, int k, Rng& rng)
        : pad((k - 1) / 2) {
        w = store.param(name + ".w", {out, in, k, k}, rng, std::sqrt(2.0 / (in * k * k)));
        gamma = store.param_const(name + ".bn.gamma", {out}, 1.0);
        beta = store.param_const(name + ".bn.beta", {out}, 0.0);
        buffers.running_mean = store.buffer(name + ".bn.running_mean", {out}, 0.0);
        buffers.running_var = store.buffer(name + ".bn.running_var", {out}, 1.0);
    }

    Value forward(const Value& x, bool train) {
        auto y = conv2d(x, w, nullptr, 1, pad);
        y = batch_norm(y, gamma, beta, buffers, train);
        return activation(y, Act::LeakyRelu);
    }
};

}  // namespace sodkit
