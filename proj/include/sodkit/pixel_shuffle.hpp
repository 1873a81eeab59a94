#pragma once

#include "sodkit/tensor.hpp"

namespace sodkit {

// Lossless layout conversion between (C, H, W) and (C*r^2, H/r, W/r).
// Convention (frozen): x is the column index, y the row index, and the
// high-resolution pixel (x, y, c) lands in low-resolution channel
//   C*r*mod(y, r) + C*mod(x, r) + c
// at spatial position (floor(y/r), floor(x/r)). Both directions are pure
// index permutations; no value is created, dropped, or changed.

// Per-image gather map: out flat index (over C*r^2 x H/r x W/r, row-major
// CHW) -> in flat index (over C x H x W). Throws unless r divides H and W.
std::vector<long long> unshuffle_index_map(int c, int h, int w, int r);

// Raw (tape-free) batched apply on NCHW data; used for ground-truth masks.
void unshuffle_raw(const Shape& in_shape, const std::vector<double>& in, int r,
                   Shape& out_shape, std::vector<double>& out);
void shuffle_raw(const Shape& in_shape, const std::vector<double>& in, int r,
                 Shape& out_shape, std::vector<double>& out);

}  // namespace sodkit
