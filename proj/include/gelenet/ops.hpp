#pragma once

#include "gelenet/tensor.hpp"

#include <cstddef>
#include <vector>

// Differentiable tensor operations. Every function records a backward rule on
// the active tape when one of its inputs requires a gradient.
namespace gelenet::ops {

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Cross-correlation of x (n,c_in,h,w) with weight (c_out,c_in,k_h,k_w).
/// `bias` may be undefined; otherwise it has shape (1,c_out,1,1).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options = {});

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

// Element-wise arithmetic with broadcasting over size-1 dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& sizes);
/// Equal split into `groups` consecutive channel subsets.
std::vector<Tensor> split_channels(const Tensor& x, std::size_t groups);

/// out channel i = in channel perm[i].
Tensor permute_channels(const Tensor& x, const std::vector<std::size_t>& perm);
/// Shuffle with g groups of k = C/g channels: out[k_idx*g + d] = in[d*k + k_idx].
Tensor channel_shuffle(const Tensor& x, std::size_t groups);
std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels, std::size_t groups);

/// Bilinear upsampling by factor 2, 4 or 8, align_corners = false.
Tensor bilinear_upsample(const Tensor& x, std::size_t factor);

Tensor channel_max(const Tensor& x);
Tensor channel_mean(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);

/// Per (n,c) plane: (x - mean) / (unbiased std + eps).
Tensor spatial_standardize(const Tensor& x, double eps);

Tensor reshape(const Tensor& x, Shape shape);

// 2D views: the trailing (h,w) dims are rows and columns, batched over (n,c).
Tensor transpose2d(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

} // namespace gelenet::ops
