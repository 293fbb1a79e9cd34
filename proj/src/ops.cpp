#include "gelenet/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace gelenet::ops {

namespace {

Tensor make_output(Shape shape)
{
    return Tensor(shape, 0.0);
}

void record(const char* op, std::vector<Tensor> inputs, const Tensor& out, Tape::BackwardFn fn)
{
    Tape::active()->record(op, std::move(inputs), out, std::move(fn));
}

std::string describe(const char* op, const Shape& a, const Shape& b)
{
    return std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str();
}

// Broadcasting over size-1 dims. Returns the output shape or throws.
Shape broadcast_shape(const char* op, const Shape& a, const Shape& b)
{
    const std::array<std::size_t, 4> da{a.n, a.c, a.h, a.w};
    const std::array<std::size_t, 4> db{b.n, b.c, b.h, b.w};
    std::array<std::size_t, 4> out{};
    for (int i = 0; i < 4; ++i) {
        if (da[i] == db[i] || db[i] == 1)
            out[i] = da[i];
        else if (da[i] == 1)
            out[i] = db[i];
        else
            throw ShapeError(describe(op, a, b));
    }
    return Shape{out[0], out[1], out[2], out[3]};
}

// Row-major strides with zero stride on broadcast dims.
std::array<std::size_t, 4> broadcast_strides(const Shape& s, const Shape& out)
{
    std::array<std::size_t, 4> st{s.c * s.h * s.w, s.h * s.w, s.w, 1};
    if (s.n == 1 && out.n != 1) st[0] = 0;
    if (s.c == 1 && out.c != 1) st[1] = 0;
    if (s.h == 1 && out.h != 1) st[2] = 0;
    if (s.w == 1 && out.w != 1) st[3] = 0;
    return st;
}

template <typename F>
void for_each_broadcast(const Shape& out, const std::array<std::size_t, 4>& sa, const std::array<std::size_t, 4>& sb, F&& f)
{
    std::size_t o = 0;
    for (std::size_t n = 0; n < out.n; ++n)
        for (std::size_t c = 0; c < out.c; ++c)
            for (std::size_t h = 0; h < out.h; ++h) {
                const std::size_t ia = n * sa[0] + c * sa[1] + h * sa[2];
                const std::size_t ib = n * sb[0] + c * sb[1] + h * sb[2];
                for (std::size_t w = 0; w < out.w; ++w, ++o)
                    f(o, ia + w * sa[3], ib + w * sb[3]);
            }
}

void check_finite(const char* op, const Tensor& x)
{
    for (double v : x.data())
        if (std::isnan(v))
            throw std::domain_error(std::string(op) + ": NaN in input");
}

} // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding)
{
    if (stride == 0)
        throw ShapeError("conv2d: stride must be positive");
    if (in + 2 * padding < kernel)
        throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(in + 2 * padding));
    return (in + 2 * padding - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv2d via im2col. Column buffers are rebuilt in backward rather than kept.

namespace {

struct ConvGeometry {
    std::size_t cin, cout, kh, kw, h, w, oh, ow, stride, pad;
    std::size_t rows() const { return cin * kh * kw; }
    std::size_t cols() const { return oh * ow; }
};

void im2col(const double* x, const ConvGeometry& g, double* col)
{
    const std::size_t P = g.cols();
    for (std::size_t ci = 0; ci < g.cin; ++ci)
        for (std::size_t ki = 0; ki < g.kh; ++ki)
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                double* dst = col + ((ci * g.kh + ki) * g.kw + kj) * P;
                const double* plane = x + ci * g.h * g.w;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                    double* row = dst + oy * g.ow;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        std::fill(row, row + g.ow, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * g.w;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
                        row[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
                    }
                }
            }
}

void col2im_add(const double* col, const ConvGeometry& g, double* dx)
{
    const std::size_t P = g.cols();
    for (std::size_t ci = 0; ci < g.cin; ++ci)
        for (std::size_t ki = 0; ki < g.kh; ++ki)
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const double* src = col + ((ci * g.kh + ki) * g.kw + kj) * P;
                double* plane = dx + ci * g.h * g.w;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h))
                        continue;
                    double* dst = plane + static_cast<std::size_t>(iy) * g.w;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
                        if (ix >= 0 && ix < static_cast<long>(g.w))
                            dst[ix] += src[oy * g.ow + ox];
                    }
                }
            }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options)
{
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.c != ws.c)
        throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels but weight expects c_in = " +
                         std::to_string(ws.c) + " (input " + xs.str() + ", weight " + ws.str() + ")");
    if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1})
        throw ShapeError("conv2d: bias shape " + bias.shape().str() + " does not match c_out = " +
                         std::to_string(ws.n));

    ConvGeometry g{ws.c, ws.n, ws.h, ws.w, xs.h, xs.w, 0, 0, options.stride, options.padding};
    g.oh = conv_output_size(xs.h, ws.h, options.stride, options.padding);
    g.ow = conv_output_size(xs.w, ws.w, options.stride, options.padding);

    Tensor out = make_output(Shape{xs.n, g.cout, g.oh, g.ow});
    const std::size_t K = g.rows();
    const std::size_t P = g.cols();
    std::vector<double> col(K * P);
    const double* W = weight.ptr();
    for (std::size_t b = 0; b < xs.n; ++b) {
        im2col(x.ptr() + b * xs.c * xs.h * xs.w, g, col.data());
        double* y = out.ptr() + b * g.cout * P;
        for (std::size_t co = 0; co < g.cout; ++co) {
            double* yrow = y + co * P;
            const double* wrow = W + co * K;
            for (std::size_t r = 0; r < K; ++r) {
                const double wv = wrow[r];
                if (wv == 0.0)
                    continue;
                const double* crow = col.data() + r * P;
                for (std::size_t p = 0; p < P; ++p)
                    yrow[p] += wv * crow[p];
            }
            if (bias.defined()) {
                const double bv = bias.ptr()[co];
                for (std::size_t p = 0; p < P; ++p)
                    yrow[p] += bv;
            }
        }
    }

    if (should_record({&x, &weight, &bias})) {
        record("conv2d", {x, weight, bias}, out, [x, weight, bias, g](const Tensor& o) mutable {
            const std::size_t K = g.rows();
            const std::size_t P = g.cols();
            const std::size_t N = x.shape().n;
            const auto gy = o.grad();
            if (bias.defined() && bias.requires_grad()) {
                auto gb = bias.ensure_grad();
                for (std::size_t b = 0; b < N; ++b)
                    for (std::size_t co = 0; co < g.cout; ++co) {
                        const double* row = gy.data() + (b * g.cout + co) * P;
                        gb[co] += std::accumulate(row, row + P, 0.0);
                    }
            }
            const bool want_w = weight.requires_grad();
            const bool want_x = x.requires_grad();
            if (!want_w && !want_x)
                return;
            std::vector<double> col(K * P);
            std::vector<double> dcol(want_x ? K * P : 0);
            const double* W = weight.ptr();
            const std::size_t in_plane = g.cin * g.h * g.w;
            for (std::size_t b = 0; b < N; ++b) {
                const double* dy = gy.data() + b * g.cout * P;
                if (want_w) {
                    auto gw = weight.ensure_grad();
                    im2col(x.ptr() + b * in_plane, g, col.data());
                    for (std::size_t co = 0; co < g.cout; ++co) {
                        const double* dyrow = dy + co * P;
                        for (std::size_t r = 0; r < K; ++r) {
                            const double* crow = col.data() + r * P;
                            double acc = 0.0;
                            for (std::size_t p = 0; p < P; ++p)
                                acc += dyrow[p] * crow[p];
                            gw[co * K + r] += acc;
                        }
                    }
                }
                if (want_x) {
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    for (std::size_t co = 0; co < g.cout; ++co) {
                        const double* dyrow = dy + co * P;
                        for (std::size_t r = 0; r < K; ++r) {
                            const double wv = W[co * K + r];
                            if (wv == 0.0)
                                continue;
                            double* drow = dcol.data() + r * P;
                            for (std::size_t p = 0; p < P; ++p)
                                drow[p] += wv * dyrow[p];
                        }
                    }
                    auto gx = x.ensure_grad();
                    col2im_add(dcol.data(), g, gx.data() + b * in_plane);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Broadcast arithmetic

Tensor add(const Tensor& a, const Tensor& b)
{
    const Shape os = broadcast_shape("add", a.shape(), b.shape());
    const auto sa = broadcast_strides(a.shape(), os);
    const auto sb = broadcast_strides(b.shape(), os);
    Tensor out = make_output(os);
    double* y = out.ptr();
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for_each_broadcast(os, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { y[o] = pa[ia] + pb[ib]; });
    if (should_record({&a, &b})) {
        record("add", {a, b}, out, [a, b, sa, sb](const Tensor& o) mutable {
            const auto g = o.grad();
            if (a.requires_grad()) {
                auto ga = a.ensure_grad();
                for_each_broadcast(o.shape(), sa, sb, [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
            }
            if (b.requires_grad()) {
                auto gb = b.ensure_grad();
                for_each_broadcast(o.shape(), sa, sb, [&](std::size_t i, std::size_t, std::size_t ib) { gb[ib] += g[i]; });
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    return add(a, scale(b, -1.0));
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    const Shape os = broadcast_shape("mul", a.shape(), b.shape());
    const auto sa = broadcast_strides(a.shape(), os);
    const auto sb = broadcast_strides(b.shape(), os);
    Tensor out = make_output(os);
    double* y = out.ptr();
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for_each_broadcast(os, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) { y[o] = pa[ia] * pb[ib]; });
    if (should_record({&a, &b})) {
        record("mul", {a, b}, out, [a, b, sa, sb](const Tensor& o) mutable {
            const auto g = o.grad();
            const double* pa = a.ptr();
            const double* pb = b.ptr();
            if (a.requires_grad()) {
                auto ga = a.ensure_grad();
                for_each_broadcast(o.shape(), sa, sb,
                                   [&](std::size_t i, std::size_t ia, std::size_t ib) { ga[ia] += g[i] * pb[ib]; });
            }
            if (b.requires_grad()) {
                auto gb = b.ensure_grad();
                for_each_broadcast(o.shape(), sa, sb,
                                   [&](std::size_t i, std::size_t ia, std::size_t ib) { gb[ib] += g[i] * pa[ia]; });
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double factor)
{
    Tensor out = make_output(x.shape());
    const auto in = x.data();
    auto y = out.data();
    for (std::size_t i = 0; i < in.size(); ++i)
        y[i] = in[i] * factor;
    if (should_record({&x})) {
        record("scale", {x}, out, [x, factor](const Tensor& o) mutable {
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += g[i] * factor;
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& x, double value)
{
    Tensor out = make_output(x.shape());
    const auto in = x.data();
    auto y = out.data();
    for (std::size_t i = 0; i < in.size(); ++i)
        y[i] = in[i] + value;
    if (should_record({&x})) {
        record("add_scalar", {x}, out, [x](const Tensor& o) mutable {
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += g[i];
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x)
{
    Tensor out = make_output(x.shape());
    const auto in = x.data();
    auto y = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double v = in[i];
        // split by sign so exp never overflows
        if (v >= 0.0) {
            y[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            y[i] = e / (1.0 + e);
        }
    }
    if (should_record({&x})) {
        record("sigmoid", {x}, out, [x](const Tensor& o) mutable {
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            const auto y = o.data();
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += g[i] * y[i] * (1.0 - y[i]);
        });
    }
    return out;
}

Tensor relu(const Tensor& x)
{
    Tensor out = make_output(x.shape());
    const auto in = x.data();
    auto y = out.data();
    for (std::size_t i = 0; i < in.size(); ++i)
        y[i] = in[i] > 0.0 ? in[i] : 0.0;
    if (should_record({&x})) {
        record("relu", {x}, out, [x](const Tensor& o) mutable {
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            const auto in = x.data();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (in[i] > 0.0)
                    gx[i] += g[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Channel bookkeeping

Tensor concat_channels(const std::vector<Tensor>& parts)
{
    if (parts.empty())
        throw ShapeError("concat_channels: no inputs");
    const Shape& s0 = parts.front().shape();
    std::size_t channels = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw ShapeError(describe("concat_channels", s0, s));
        channels += s.c;
    }
    const Shape os{s0.n, channels, s0.h, s0.w};
    Tensor out = make_output(os);
    const std::size_t plane = os.plane();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t block = p.shape().c * plane;
        for (std::size_t b = 0; b < os.n; ++b)
            std::copy_n(p.ptr() + b * block, block, out.ptr() + (b * channels + offset) * plane);
        offset += p.shape().c;
    }

    bool any = false;
    for (const auto& p : parts)
        any = any || should_record({&p});
    if (any) {
        record("concat_channels", parts, out, [parts](const Tensor& o) mutable {
            const Shape& os = o.shape();
            const std::size_t plane = os.plane();
            const auto g = o.grad();
            std::size_t offset = 0;
            for (auto& p : parts) {
                const std::size_t block = p.shape().c * plane;
                if (p.requires_grad()) {
                    auto gp = p.ensure_grad();
                    for (std::size_t b = 0; b < os.n; ++b) {
                        const double* src = g.data() + (b * os.c + offset) * plane;
                        double* dst = gp.data() + b * block;
                        for (std::size_t i = 0; i < block; ++i)
                            dst[i] += src[i];
                    }
                }
                offset += p.shape().c;
            }
        });
    }
    return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count)
{
    const Shape& s = x.shape();
    if (begin + count > s.c || count == 0)
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + std::to_string(s.c) + " channels");
    const std::size_t plane = s.plane();
    Tensor out = make_output(Shape{s.n, count, s.h, s.w});
    for (std::size_t b = 0; b < s.n; ++b)
        std::copy_n(x.ptr() + (b * s.c + begin) * plane, count * plane, out.ptr() + b * count * plane);
    if (should_record({&x})) {
        record("slice_channels", {x}, out, [x, begin, count](const Tensor& o) mutable {
            const Shape& s = x.shape();
            const std::size_t plane = s.plane();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t b = 0; b < s.n; ++b) {
                double* dst = gx.data() + (b * s.c + begin) * plane;
                const double* src = g.data() + b * count * plane;
                for (std::size_t i = 0; i < count * plane; ++i)
                    dst[i] += src[i];
            }
        });
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& sizes)
{
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total != x.shape().c)
        throw ShapeError("split_channels: sizes sum to " + std::to_string(total) + " but input has " +
                         std::to_string(x.shape().c) + " channels");
    std::vector<Tensor> parts;
    std::size_t begin = 0;
    for (std::size_t s : sizes) {
        parts.push_back(slice_channels(x, begin, s));
        begin += s;
    }
    return parts;
}

std::vector<Tensor> split_channels(const Tensor& x, std::size_t groups)
{
    if (groups == 0 || x.shape().c % groups != 0)
        throw ShapeError("split_channels: " + std::to_string(x.shape().c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
    return split_channels(x, std::vector<std::size_t>(groups, x.shape().c / groups));
}

Tensor permute_channels(const Tensor& x, const std::vector<std::size_t>& perm)
{
    const Shape& s = x.shape();
    if (perm.size() != s.c)
        throw ShapeError("permute_channels: permutation of length " + std::to_string(perm.size()) + " for " +
                         std::to_string(s.c) + " channels");
    std::vector<bool> seen(s.c, false);
    for (std::size_t p : perm) {
        if (p >= s.c || seen[p])
            throw std::invalid_argument("permute_channels: not a permutation");
        seen[p] = true;
    }
    const std::size_t plane = s.plane();
    Tensor out = make_output(s);
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t c = 0; c < s.c; ++c)
            std::copy_n(x.ptr() + (b * s.c + perm[c]) * plane, plane, out.ptr() + (b * s.c + c) * plane);
    if (should_record({&x})) {
        record("permute_channels", {x}, out, [x, perm](const Tensor& o) mutable {
            const Shape& s = x.shape();
            const std::size_t plane = s.plane();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t b = 0; b < s.n; ++b)
                for (std::size_t c = 0; c < s.c; ++c) {
                    double* dst = gx.data() + (b * s.c + perm[c]) * plane;
                    const double* src = g.data() + (b * s.c + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i)
                        dst[i] += src[i];
                }
        });
    }
    return out;
}

std::vector<std::size_t> channel_shuffle_permutation(std::size_t channels, std::size_t groups)
{
    if (groups == 0 || channels % groups != 0)
        throw ShapeError("channel_shuffle: " + std::to_string(channels) + " channels not divisible by " +
                         std::to_string(groups) + " groups");
    const std::size_t per_group = channels / groups;
    std::vector<std::size_t> perm(channels);
    for (std::size_t d = 0; d < groups; ++d)
        for (std::size_t k = 0; k < per_group; ++k)
            perm[k * groups + d] = d * per_group + k;
    return perm;
}

Tensor channel_shuffle(const Tensor& x, std::size_t groups)
{
    return permute_channels(x, channel_shuffle_permutation(x.shape().c, groups));
}

// ---------------------------------------------------------------------------
// Resampling and pooling

namespace {
struct LerpTap {
    std::size_t i0, i1;
    double frac;
};

std::vector<LerpTap> upsample_taps(std::size_t in, std::size_t factor)
{
    std::vector<LerpTap> taps(in * factor);
    const double inv = 1.0 / static_cast<double>(factor);
    for (std::size_t o = 0; o < taps.size(); ++o) {
        double src = (static_cast<double>(o) + 0.5) * inv - 0.5;
        if (src < 0.0)
            src = 0.0;
        auto i0 = static_cast<std::size_t>(src);
        if (i0 > in - 1)
            i0 = in - 1;
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}
} // namespace

Tensor bilinear_upsample(const Tensor& x, std::size_t factor)
{
    if (factor != 2 && factor != 4 && factor != 8)
        throw std::invalid_argument("bilinear_upsample: unsupported factor " + std::to_string(factor) +
                                    " (expected 2, 4 or 8)");
    const Shape& s = x.shape();
    if (s.h == 0 || s.w == 0)
        throw ShapeError("bilinear_upsample: empty input " + s.str());
    const Shape os{s.n, s.c, s.h * factor, s.w * factor};
    const auto ty = upsample_taps(s.h, factor);
    const auto tx = upsample_taps(s.w, factor);
    Tensor out = make_output(os);
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
        const double* in = x.ptr() + p * s.plane();
        double* y = out.ptr() + p * os.plane();
        for (std::size_t oy = 0; oy < os.h; ++oy) {
            const auto& a = ty[oy];
            const double* r0 = in + a.i0 * s.w;
            const double* r1 = in + a.i1 * s.w;
            for (std::size_t ox = 0; ox < os.w; ++ox) {
                const auto& b = tx[ox];
                const double top = r0[b.i0] * (1.0 - b.frac) + r0[b.i1] * b.frac;
                const double bot = r1[b.i0] * (1.0 - b.frac) + r1[b.i1] * b.frac;
                y[oy * os.w + ox] = top * (1.0 - a.frac) + bot * a.frac;
            }
        }
    }
    if (should_record({&x})) {
        record("bilinear_upsample", {x}, out, [x, ty, tx](const Tensor& o) mutable {
            const Shape& s = x.shape();
            const Shape& os = o.shape();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t p = 0; p < s.n * s.c; ++p) {
                double* dx = gx.data() + p * s.plane();
                const double* dy = g.data() + p * os.plane();
                for (std::size_t oy = 0; oy < os.h; ++oy) {
                    const auto& a = ty[oy];
                    double* r0 = dx + a.i0 * s.w;
                    double* r1 = dx + a.i1 * s.w;
                    for (std::size_t ox = 0; ox < os.w; ++ox) {
                        const auto& b = tx[ox];
                        const double v = dy[oy * os.w + ox];
                        const double top = v * (1.0 - a.frac);
                        const double bot = v * a.frac;
                        r0[b.i0] += top * (1.0 - b.frac);
                        r0[b.i1] += top * b.frac;
                        r1[b.i0] += bot * (1.0 - b.frac);
                        r1[b.i1] += bot * b.frac;
                    }
                }
            }
        });
    }
    return out;
}

Tensor channel_max(const Tensor& x)
{
    const Shape& s = x.shape();
    if (s.c == 0)
        throw ShapeError("channel_max: no channels");
    const std::size_t plane = s.plane();
    Tensor out = make_output(Shape{s.n, 1, s.h, s.w});
    std::vector<std::size_t> arg(s.n * plane, 0);
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
            const double* base = x.ptr() + b * s.c * plane + i;
            double best = base[0];
            std::size_t best_c = 0;
            for (std::size_t c = 1; c < s.c; ++c)
                if (base[c * plane] > best) {
                    best = base[c * plane];
                    best_c = c;
                }
            out.ptr()[b * plane + i] = best;
            arg[b * plane + i] = best_c;
        }
    if (should_record({&x})) {
        record("channel_max", {x}, out, [x, arg](const Tensor& o) mutable {
            const Shape& s = x.shape();
            const std::size_t plane = s.plane();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t b = 0; b < s.n; ++b)
                for (std::size_t i = 0; i < plane; ++i)
                    gx[(b * s.c + arg[b * plane + i]) * plane + i] += g[b * plane + i];
        });
    }
    return out;
}

Tensor channel_mean(const Tensor& x)
{
    const Shape& s = x.shape();
    if (s.c == 0)
        throw ShapeError("channel_mean: no channels");
    const std::size_t plane = s.plane();
    const double inv = 1.0 / static_cast<double>(s.c);
    Tensor out = make_output(Shape{s.n, 1, s.h, s.w});
    for (std::size_t b = 0; b < s.n; ++b) {
        double* y = out.ptr() + b * plane;
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* src = x.ptr() + (b * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                y[i] += src[i];
        }
        for (std::size_t i = 0; i < plane; ++i)
            y[i] *= inv;
    }
    if (should_record({&x})) {
        record("channel_mean", {x}, out, [x, inv](const Tensor& o) mutable {
            const Shape& s = x.shape();
            const std::size_t plane = s.plane();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t b = 0; b < s.n; ++b)
                for (std::size_t c = 0; c < s.c; ++c) {
                    double* dst = gx.data() + (b * s.c + c) * plane;
                    const double* src = g.data() + b * plane;
                    for (std::size_t i = 0; i < plane; ++i)
                        dst[i] += src[i] * inv;
                }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x)
{
    const Shape& s = x.shape();
    const std::size_t plane = s.plane();
    if (plane == 0)
        throw ShapeError("global_avg_pool: empty plane");
    const double inv = 1.0 / static_cast<double>(plane);
    Tensor out = make_output(Shape{s.n, s.c, 1, 1});
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
        const double* src = x.ptr() + p * plane;
        out.ptr()[p] = std::accumulate(src, src + plane, 0.0) * inv;
    }
    if (should_record({&x})) {
        record("global_avg_pool", {x}, out, [x, inv](const Tensor& o) mutable {
            const Shape& s = x.shape();
            const std::size_t plane = s.plane();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t p = 0; p < s.n * s.c; ++p)
                for (std::size_t i = 0; i < plane; ++i)
                    gx[p * plane + i] += g[p] * inv;
        });
    }
    return out;
}

Tensor spatial_standardize(const Tensor& x, double eps)
{
    const Shape& s = x.shape();
    const std::size_t N = s.plane();
    Tensor out = make_output(s);
    std::vector<double> stdev(s.n * s.c, 0.0);
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
        const double* src = x.ptr() + p * N;
        double* y = out.ptr() + p * N;
        const double mu = std::accumulate(src, src + N, 0.0) / static_cast<double>(N);
        double ss = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            ss += (src[i] - mu) * (src[i] - mu);
        const double sd = N > 1 ? std::sqrt(ss / static_cast<double>(N - 1)) : 0.0;
        stdev[p] = sd;
        for (std::size_t i = 0; i < N; ++i)
            y[i] = (src[i] - mu) / (sd + eps);
    }
    if (should_record({&x})) {
        record("spatial_standardize", {x}, out, [x, stdev, eps](const Tensor& o) mutable {
            const Shape& s = x.shape();
            const std::size_t N = s.plane();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t p = 0; p < s.n * s.c; ++p) {
                const double* src = x.ptr() + p * N;
                const double* gy = g.data() + p * N;
                const double mu = std::accumulate(src, src + N, 0.0) / static_cast<double>(N);
                const double gbar = std::accumulate(gy, gy + N, 0.0) / static_cast<double>(N);
                const double sd = stdev[p];
                const double u = sd + eps;
                double gd = 0.0;
                for (std::size_t i = 0; i < N; ++i)
                    gd += gy[i] * (src[i] - mu);
                const double k = (sd > 0.0 && N > 1) ? gd / (u * u * static_cast<double>(N - 1) * sd) : 0.0;
                for (std::size_t i = 0; i < N; ++i)
                    gx[p * N + i] += (gy[i] - gbar) / u - k * (src[i] - mu);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Views and linear algebra

Tensor reshape(const Tensor& x, Shape shape)
{
    if (shape.size() != x.size())
        throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
    Tensor out(shape, std::vector<double>(x.data().begin(), x.data().end()));
    if (should_record({&x})) {
        record("reshape", {x}, out, [x](const Tensor& o) mutable {
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += g[i];
        });
    }
    return out;
}

Tensor transpose2d(const Tensor& x)
{
    const Shape& s = x.shape();
    const Shape os{s.n, s.c, s.w, s.h};
    Tensor out = make_output(os);
    for (std::size_t p = 0; p < s.n * s.c; ++p) {
        const double* src = x.ptr() + p * s.plane();
        double* y = out.ptr() + p * s.plane();
        for (std::size_t i = 0; i < s.h; ++i)
            for (std::size_t j = 0; j < s.w; ++j)
                y[j * s.h + i] = src[i * s.w + j];
    }
    if (should_record({&x})) {
        record("transpose2d", {x}, out, [x](const Tensor& o) mutable {
            const Shape& s = x.shape();
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            for (std::size_t p = 0; p < s.n * s.c; ++p)
                for (std::size_t i = 0; i < s.h; ++i)
                    for (std::size_t j = 0; j < s.w; ++j)
                        gx[p * s.plane() + i * s.w + j] += g[p * s.plane() + j * s.h + i];
        });
    }
    return out;
}

namespace {
// C[p x r] += A[p x q] * B[q x r]
void gemm_nn(const double* A, const double* B, double* C, std::size_t p, std::size_t q, std::size_t r)
{
    for (std::size_t i = 0; i < p; ++i) {
        double* crow = C + i * r;
        for (std::size_t k = 0; k < q; ++k) {
            const double a = A[i * q + k];
            const double* brow = B + k * r;
            for (std::size_t j = 0; j < r; ++j)
                crow[j] += a * brow[j];
        }
    }
}
} // namespace

Tensor matmul(const Tensor& a, const Tensor& b)
{
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != sb.n || sa.c != sb.c || sa.w != sb.h)
        throw ShapeError("matmul: cannot multiply " + std::to_string(sa.h) + "x" + std::to_string(sa.w) + " by " +
                         std::to_string(sb.h) + "x" + std::to_string(sb.w) + " (" + describe("matmul", sa, sb) + ")");
    const std::size_t p = sa.h, q = sa.w, r = sb.w;
    Tensor out = make_output(Shape{sa.n, sa.c, p, r});
    for (std::size_t m = 0; m < sa.n * sa.c; ++m)
        gemm_nn(a.ptr() + m * p * q, b.ptr() + m * q * r, out.ptr() + m * p * r, p, q, r);
    if (should_record({&a, &b})) {
        record("matmul", {a, b}, out, [a, b, p, q, r](const Tensor& o) mutable {
            const std::size_t batches = a.shape().n * a.shape().c;
            const auto g = o.grad();
            if (a.requires_grad()) {
                // dA[i,k] = sum_j dY[i,j] * B[k,j]
                auto ga = a.ensure_grad();
                for (std::size_t m = 0; m < batches; ++m) {
                    const double* dy = g.data() + m * p * r;
                    const double* B = b.ptr() + m * q * r;
                    double* dA = ga.data() + m * p * q;
                    for (std::size_t i = 0; i < p; ++i)
                        for (std::size_t k = 0; k < q; ++k) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < r; ++j)
                                acc += dy[i * r + j] * B[k * r + j];
                            dA[i * q + k] += acc;
                        }
                }
            }
            if (b.requires_grad()) {
                // dB[k,j] = sum_i A[i,k] * dY[i,j]
                auto gb = b.ensure_grad();
                for (std::size_t m = 0; m < batches; ++m) {
                    const double* dy = g.data() + m * p * r;
                    const double* A = a.ptr() + m * p * q;
                    double* dB = gb.data() + m * q * r;
                    for (std::size_t i = 0; i < p; ++i)
                        for (std::size_t k = 0; k < q; ++k) {
                            const double av = A[i * q + k];
                            for (std::size_t j = 0; j < r; ++j)
                                dB[k * r + j] += av * dy[i * r + j];
                        }
                }
            }
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& x)
{
    check_finite("softmax_rows", x);
    const Shape& s = x.shape();
    const std::size_t rows = s.n * s.c * s.h;
    const std::size_t cols = s.w;
    Tensor out = make_output(s);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = x.ptr() + r * cols;
        double* y = out.ptr() + r * cols;
        const double mx = *std::max_element(src, src + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(src[j] - mx);
            total += y[j];
        }
        for (std::size_t j = 0; j < cols; ++j)
            y[j] /= total;
    }
    if (should_record({&x})) {
        record("softmax_rows", {x}, out, [x, rows, cols](const Tensor& o) mutable {
            auto gx = x.ensure_grad();
            const auto g = o.grad();
            const auto y = o.data();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j)
                    dot += g[r * cols + j] * y[r * cols + j];
                for (std::size_t j = 0; j < cols; ++j)
                    gx[r * cols + j] += y[r * cols + j] * (g[r * cols + j] - dot);
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& x)
{
    Tensor out = Tensor::scalar(std::accumulate(x.data().begin(), x.data().end(), 0.0));
    if (should_record({&x})) {
        record("sum", {x}, out, [x](const Tensor& o) mutable {
            auto gx = x.ensure_grad();
            const double g = o.grad()[0];
            for (double& v : gx)
                v += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x)
{
    if (x.size() == 0)
        throw ShapeError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

} // namespace gelenet::ops
