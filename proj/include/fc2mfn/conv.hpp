// Direct 2D complex convolution (correlation) kernels and their adjoints.
// A complex convolution is four real correlations combined as
//   out = (WR*IR - WI*II) + i(WR*II + WI*IR) + bias.
// All kernels run on raw planes with explicit bounds, no materialized padding.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fc2mfn/ctensor.hpp"

namespace fc2mfn {

struct ConvGeom {
  int stride = 1;
  int dilation = 1;
  int pad = 0;
  int groups = 1;
};

inline int same_pad(int kernel, int dilation) { return ((kernel - 1) * dilation) / 2; }

inline int conv_out_dim(int in, int kernel, const ConvGeom& g) {
  const int span = (kernel - 1) * g.dilation + 1;
  const int num = in + 2 * g.pad - span;
  if (num < 0) return 0;
  return num / g.stride + 1;
}

namespace detail {

inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

// Output index range [lo, hi] for which the input index oy*stride + k*dil - pad
// stays inside [0, in_dim).
struct TapRange {
  int lo, hi;
};

inline TapRange tap_range(int out_dim, int in_dim, int k, int stride, int dil, int pad) {
  const int off = k * dil - pad;
  int lo = ceil_div(-off, stride);
  int hi = floor_div(in_dim - 1 - off, stride);
  if (lo < 0) lo = 0;
  if (hi > out_dim - 1) hi = out_dim - 1;
  return {lo, hi};
}

// out += sign * (w corr in)
inline void corr2d_acc(const double* in, int h, int w, const double* ker, int k,
                       double* out, int oh, int ow, const ConvGeom& g, double sign) {
  for (int ky = 0; ky < k; ++ky) {
    const TapRange ry = tap_range(oh, h, ky, g.stride, g.dilation, g.pad);
    for (int kx = 0; kx < k; ++kx) {
      const TapRange rx = tap_range(ow, w, kx, g.stride, g.dilation, g.pad);
      if (ry.lo > ry.hi || rx.lo > rx.hi) continue;
      const double wv = sign * ker[ky * k + kx];
      for (int oy = ry.lo; oy <= ry.hi; ++oy) {
        const int iy = oy * g.stride + ky * g.dilation - g.pad;
        const double* irow = in + iy * w + (rx.lo * g.stride + kx * g.dilation - g.pad);
        double* orow = out + oy * ow + rx.lo;
        const int n = rx.hi - rx.lo + 1;
        for (int i = 0; i < n; ++i) orow[i] += wv * irow[i * g.stride];
      }
    }
  }
}

// din += sign * scatter of (w, gout); adjoint of corr2d_acc w.r.t. the input.
inline void corr2d_acc_input_adj(double* din, int h, int w, const double* ker, int k,
                                 const double* gout, int oh, int ow, const ConvGeom& g,
                                 double sign) {
  for (int ky = 0; ky < k; ++ky) {
    const TapRange ry = tap_range(oh, h, ky, g.stride, g.dilation, g.pad);
    for (int kx = 0; kx < k; ++kx) {
      const TapRange rx = tap_range(ow, w, kx, g.stride, g.dilation, g.pad);
      if (ry.lo > ry.hi || rx.lo > rx.hi) continue;
      const double wv = sign * ker[ky * k + kx];
      for (int oy = ry.lo; oy <= ry.hi; ++oy) {
        const int iy = oy * g.stride + ky * g.dilation - g.pad;
        double* irow = din + iy * w + (rx.lo * g.stride + kx * g.dilation - g.pad);
        const double* grow = gout + oy * ow + rx.lo;
        const int n = rx.hi - rx.lo + 1;
        for (int i = 0; i < n; ++i) irow[i * g.stride] += wv * grow[i];
      }
    }
  }
}

// dker += sign * (gout corr in); adjoint of corr2d_acc w.r.t. the kernel.
inline void corr2d_acc_kernel_adj(const double* in, int h, int w, double* dker, int k,
                                  const double* gout, int oh, int ow, const ConvGeom& g,
                                  double sign) {
  for (int ky = 0; ky < k; ++ky) {
    const TapRange ry = tap_range(oh, h, ky, g.stride, g.dilation, g.pad);
    for (int kx = 0; kx < k; ++kx) {
      const TapRange rx = tap_range(ow, w, kx, g.stride, g.dilation, g.pad);
      if (ry.lo > ry.hi || rx.lo > rx.hi) continue;
      double acc = 0.0;
      for (int oy = ry.lo; oy <= ry.hi; ++oy) {
        const int iy = oy * g.stride + ky * g.dilation - g.pad;
        const double* irow = in + iy * w + (rx.lo * g.stride + kx * g.dilation - g.pad);
        const double* grow = gout + oy * ow + rx.lo;
        const int n = rx.hi - rx.lo + 1;
        for (int i = 0; i < n; ++i) acc += grow[i] * irow[i * g.stride];
      }
      dker[ky * k + kx] += sign * acc;
    }
  }
}

struct ConvDims {
  int n, c, h, w;       // input
  int f, cg, k;         // filters, channels per group, kernel
  int oh, ow;           // output
  int group_size_out;   // f / groups
};

inline ConvDims conv_dims(const Shape& in, const Shape& wt, const ConvGeom& g) {
  if (in.size() != 4 || wt.size() != 4 || wt[2] != wt[3])
    throw ShapeError("conv2d: input must be NCHW and weights (F,Cg,K,K)");
  ConvDims d;
  d.n = static_cast<int>(in[0]);
  d.c = static_cast<int>(in[1]);
  d.h = static_cast<int>(in[2]);
  d.w = static_cast<int>(in[3]);
  d.f = static_cast<int>(wt[0]);
  d.cg = static_cast<int>(wt[1]);
  d.k = static_cast<int>(wt[2]);
  if (g.groups < 1 || d.f % g.groups != 0 || d.cg * g.groups != d.c)
    throw ShapeError("conv2d: channel/group mismatch: input " + shape_str(in) +
                     ", weights " + shape_str(wt) + ", groups " +
                     std::to_string(g.groups));
  d.oh = conv_out_dim(d.h, d.k, g);
  d.ow = conv_out_dim(d.w, d.k, g);
  if (d.oh <= 0 || d.ow <= 0) throw ShapeError("conv2d: zero-size output");
  d.group_size_out = d.f / g.groups;
  return d;
}

}  // namespace detail

inline CTensor conv2d_forward(const CTensor& in, const CTensor& wt, const CTensor* bias,
                              const ConvGeom& g) {
  const detail::ConvDims d = detail::conv_dims(in.shape, wt.shape, g);
  if (bias && bias->numel() != static_cast<std::size_t>(d.f))
    throw ShapeError("conv2d: bias size mismatch");
  CTensor out(Shape{static_cast<std::size_t>(d.n), static_cast<std::size_t>(d.f),
                    static_cast<std::size_t>(d.oh), static_cast<std::size_t>(d.ow)});
  const int plane = d.h * d.w, oplane = d.oh * d.ow, wplane = d.k * d.k;
  for (int n = 0; n < d.n; ++n) {
    for (int f = 0; f < d.f; ++f) {
      double* oR = out.re.data() + (n * d.f + f) * oplane;
      double* oI = out.im.data() + (n * d.f + f) * oplane;
      const int c0 = (f / d.group_size_out) * d.cg;
      for (int cg = 0; cg < d.cg; ++cg) {
        const double* iR = in.re.data() + (n * d.c + c0 + cg) * plane;
        const double* iI = in.im.data() + (n * d.c + c0 + cg) * plane;
        const double* wR = wt.re.data() + (f * d.cg + cg) * wplane;
        const double* wI = wt.im.data() + (f * d.cg + cg) * wplane;
        detail::corr2d_acc(iR, d.h, d.w, wR, d.k, oR, d.oh, d.ow, g, 1.0);
        detail::corr2d_acc(iI, d.h, d.w, wI, d.k, oR, d.oh, d.ow, g, -1.0);
        detail::corr2d_acc(iI, d.h, d.w, wR, d.k, oI, d.oh, d.ow, g, 1.0);
        detail::corr2d_acc(iR, d.h, d.w, wI, d.k, oI, d.oh, d.ow, g, 1.0);
      }
      if (bias) {
        const double bR = bias->re[f], bI = bias->im[f];
        for (int i = 0; i < oplane; ++i) {
          oR[i] += bR;
          oI[i] += bI;
        }
      }
    }
  }
  return out;
}

// dE/d(input); gout planes are shaped like the forward output.
inline void conv2d_backward_input(const std::vector<double>& gout_re,
                                  const std::vector<double>& gout_im, const CTensor& in,
                                  const CTensor& wt, const ConvGeom& g,
                                  std::vector<double>& din_re,
                                  std::vector<double>& din_im) {
  const detail::ConvDims d = detail::conv_dims(in.shape, wt.shape, g);
  const int plane = d.h * d.w, oplane = d.oh * d.ow, wplane = d.k * d.k;
  for (int n = 0; n < d.n; ++n) {
    for (int f = 0; f < d.f; ++f) {
      const double* gR = gout_re.data() + (n * d.f + f) * oplane;
      const double* gI = gout_im.data() + (n * d.f + f) * oplane;
      const int c0 = (f / d.group_size_out) * d.cg;
      for (int cg = 0; cg < d.cg; ++cg) {
        double* dR = din_re.data() + (n * d.c + c0 + cg) * plane;
        double* dI = din_im.data() + (n * d.c + c0 + cg) * plane;
        const double* wR = wt.re.data() + (f * d.cg + cg) * wplane;
        const double* wI = wt.im.data() + (f * d.cg + cg) * wplane;
        detail::corr2d_acc_input_adj(dR, d.h, d.w, wR, d.k, gR, d.oh, d.ow, g, 1.0);
        detail::corr2d_acc_input_adj(dR, d.h, d.w, wI, d.k, gI, d.oh, d.ow, g, 1.0);
        detail::corr2d_acc_input_adj(dI, d.h, d.w, wI, d.k, gR, d.oh, d.ow, g, -1.0);
        detail::corr2d_acc_input_adj(dI, d.h, d.w, wR, d.k, gI, d.oh, d.ow, g, 1.0);
      }
    }
  }
}

// dE/d(weights).
inline void conv2d_backward_weights(const std::vector<double>& gout_re,
                                    const std::vector<double>& gout_im, const CTensor& in,
                                    const CTensor& wt, const ConvGeom& g,
                                    std::vector<double>& dw_re,
                                    std::vector<double>& dw_im) {
  const detail::ConvDims d = detail::conv_dims(in.shape, wt.shape, g);
  const int plane = d.h * d.w, oplane = d.oh * d.ow, wplane = d.k * d.k;
  for (int n = 0; n < d.n; ++n) {
    for (int f = 0; f < d.f; ++f) {
      const double* gR = gout_re.data() + (n * d.f + f) * oplane;
      const double* gI = gout_im.data() + (n * d.f + f) * oplane;
      const int c0 = (f / d.group_size_out) * d.cg;
      for (int cg = 0; cg < d.cg; ++cg) {
        const double* iR = in.re.data() + (n * d.c + c0 + cg) * plane;
        const double* iI = in.im.data() + (n * d.c + c0 + cg) * plane;
        double* dR = dw_re.data() + (f * d.cg + cg) * wplane;
        double* dI = dw_im.data() + (f * d.cg + cg) * wplane;
        detail::corr2d_acc_kernel_adj(iR, d.h, d.w, dR, d.k, gR, d.oh, d.ow, g, 1.0);
        detail::corr2d_acc_kernel_adj(iI, d.h, d.w, dR, d.k, gI, d.oh, d.ow, g, 1.0);
        detail::corr2d_acc_kernel_adj(iI, d.h, d.w, dI, d.k, gR, d.oh, d.ow, g, -1.0);
        detail::corr2d_acc_kernel_adj(iR, d.h, d.w, dI, d.k, gI, d.oh, d.ow, g, 1.0);
      }
    }
  }
}

// dE/d(bias): plain sums of the output gradient over batch and space.
inline void conv2d_backward_bias(const std::vector<double>& gout_re,
                                 const std::vector<double>& gout_im, int n, int f,
                                 int oplane, std::vector<double>& db_re,
                                 std::vector<double>& db_im) {
  for (int b = 0; b < n; ++b) {
    for (int of = 0; of < f; ++of) {
      const double* gR = gout_re.data() + (b * f + of) * oplane;
      const double* gI = gout_im.data() + (b * f + of) * oplane;
      double sR = 0.0, sI = 0.0;
      for (int i = 0; i < oplane; ++i) {
        sR += gR[i];
        sI += gI[i];
      }
      db_re[of] += sR;
      db_im[of] += sI;
    }
  }
}

}  // namespace fc2mfn
