// Complex-valued layers as tape operations: convolution, CReLU, batch
// normalization, the magnitude-and-phase pooling/unpooling pair, channel
// concatenation, and the CBR/residual/separable-atrous blocks.
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "fc2mfn/autodiff.hpp"
#include "fc2mfn/conv.hpp"
#include "fc2mfn/ctensor.hpp"

namespace fc2mfn {

// ---------------------------------------------------------------------------
// Convolution

inline Var complex_conv2d(Tape& t, Var input, Var weights, Var bias, const ConvGeom& g) {
  const CTensor& b = t.value(bias);
  CTensor out = conv2d_forward(t.value(input), t.value(weights), &b, g);
  const bool rg =
      t.requires_grad(input) || t.requires_grad(weights) || t.requires_grad(bias);
  Var o = t.make_result(std::move(out), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* gout = tt.grad_if(o);
      if (!gout) return;
      const CTensor& in = tt.value(input);
      const CTensor& wt = tt.value(weights);
      if (tt.requires_grad(input)) {
        GradPair& gi = tt.grad(input);
        conv2d_backward_input(gout->re, gout->im, in, wt, g, gi.re, gi.im);
      }
      if (tt.requires_grad(weights)) {
        GradPair& gw = tt.grad(weights);
        conv2d_backward_weights(gout->re, gout->im, in, wt, g, gw.re, gw.im);
      }
      if (tt.requires_grad(bias)) {
        GradPair& gb = tt.grad(bias);
        const Shape& os = tt.value(o).shape;
        conv2d_backward_bias(gout->re, gout->im, static_cast<int>(os[0]),
                             static_cast<int>(os[1]),
                             static_cast<int>(os[2] * os[3]), gb.re, gb.im);
      }
    });
  return o;
}

// ---------------------------------------------------------------------------
// CReLU: max(x,0) + i max(y,0). Subgradient at 0 is 0 per part.

inline Var crelu(Tape& t, Var z) {
  const CTensor& in = t.value(z);
  CTensor out(in.shape);
  for (std::size_t i = 0; i < in.numel(); ++i) {
    out.re[i] = in.re[i] > 0.0 ? in.re[i] : 0.0;
    out.im[i] = in.im[i] > 0.0 ? in.im[i] : 0.0;
  }
  if (t.monitor) {
    // exact zeros are structurally pinned (flat upstream CReLU regions
    // propagated through add/pool/unpool) and stay put under perturbation;
    // only near-zero parts invalidate finite differences
    for (std::size_t i = 0; i < in.numel(); ++i) {
      if (in.re[i] != 0.0) t.monitor->observe_crelu(std::abs(in.re[i]));
      if (in.im[i] != 0.0) t.monitor->observe_crelu(std::abs(in.im[i]));
    }
  }
  const bool rg = t.requires_grad(z);
  Var o = t.make_result(std::move(out), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(o);
      if (!g) return;
      const CTensor& v = tt.value(z);
      GradPair& gz = tt.grad(z);
      for (std::size_t i = 0; i < v.numel(); ++i) {
        if (v.re[i] > 0.0) gz.re[i] += g->re[i];
        if (v.im[i] > 0.0) gz.im[i] += g->im[i];
      }
    });
  return o;
}

// ---------------------------------------------------------------------------
// Batch normalization, real and imaginary parts normalized independently.

// Per-channel running statistics, one value per part. Owned by the model;
// updated only by training-mode forward passes.
struct BatchNormState {
  std::vector<double> mean_re, mean_im, var_re, var_im;

  explicit BatchNormState(std::size_t channels = 0)
      : mean_re(channels, 0.0),
        mean_im(channels, 0.0),
        var_re(channels, 1.0),
        var_im(channels, 1.0) {}
};

namespace detail {

struct BnSaved {
  std::vector<double> xhat_re, xhat_im;      // normalized values, pre gamma/beta
  std::vector<double> inv_std_re, inv_std_im;  // per channel
  bool training = false;
};

inline void bn_plane_forward(const double* x, double* y, double* xhat, int n, int c,
                             int plane, int ch, double gamma, double beta, double mean,
                             double inv_std) {
  for (int b = 0; b < n; ++b) {
    const double* xr = x + (b * c + ch) * plane;
    double* yr = y + (b * c + ch) * plane;
    double* hr = xhat + (b * c + ch) * plane;
    for (int i = 0; i < plane; ++i) {
      const double h = (xr[i] - mean) * inv_std;
      hr[i] = h;
      yr[i] = gamma * h + beta;
    }
  }
}

}  // namespace detail

inline Var complex_batch_norm(Tape& t, Var z, Var gamma, Var beta, BatchNormState& state,
                              bool training, double eps = 1e-5, double momentum = 0.1) {
  const CTensor& in = t.value(z);
  if (in.shape.size() != 4) throw ShapeError("batch_norm: input must be NCHW");
  const int n = static_cast<int>(in.shape[0]);
  const int c = static_cast<int>(in.shape[1]);
  const int plane = static_cast<int>(in.shape[2] * in.shape[3]);
  if (t.value(gamma).numel() != static_cast<std::size_t>(c) ||
      t.value(beta).numel() != static_cast<std::size_t>(c) ||
      state.mean_re.size() != static_cast<std::size_t>(c))
    throw ShapeError("batch_norm: parameter/state channel mismatch");

  auto saved = std::make_shared<detail::BnSaved>();
  saved->training = training;
  saved->xhat_re.resize(in.numel());
  saved->xhat_im.resize(in.numel());
  saved->inv_std_re.resize(c);
  saved->inv_std_im.resize(c);

  CTensor out(in.shape);
  const CTensor& gm = t.value(gamma);
  const CTensor& bt = t.value(beta);
  const double m = static_cast<double>(n) * plane;

  for (int ch = 0; ch < c; ++ch) {
    double mean_r, mean_i, var_r, var_i;
    if (training) {
      double sr = 0.0, si = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* xr = in.re.data() + (b * c + ch) * plane;
        const double* xi = in.im.data() + (b * c + ch) * plane;
        for (int i = 0; i < plane; ++i) {
          sr += xr[i];
          si += xi[i];
        }
      }
      mean_r = sr / m;
      mean_i = si / m;
      double vr = 0.0, vi = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* xr = in.re.data() + (b * c + ch) * plane;
        const double* xi = in.im.data() + (b * c + ch) * plane;
        for (int i = 0; i < plane; ++i) {
          vr += (xr[i] - mean_r) * (xr[i] - mean_r);
          vi += (xi[i] - mean_i) * (xi[i] - mean_i);
        }
      }
      var_r = vr / m;
      var_i = vi / m;
      state.mean_re[ch] = (1.0 - momentum) * state.mean_re[ch] + momentum * mean_r;
      state.mean_im[ch] = (1.0 - momentum) * state.mean_im[ch] + momentum * mean_i;
      state.var_re[ch] = (1.0 - momentum) * state.var_re[ch] + momentum * var_r;
      state.var_im[ch] = (1.0 - momentum) * state.var_im[ch] + momentum * var_i;
    } else {
      mean_r = state.mean_re[ch];
      mean_i = state.mean_im[ch];
      var_r = state.var_re[ch];
      var_i = state.var_im[ch];
    }
    const double inv_r = 1.0 / std::sqrt(var_r + eps);
    const double inv_i = 1.0 / std::sqrt(var_i + eps);
    saved->inv_std_re[ch] = inv_r;
    saved->inv_std_im[ch] = inv_i;
    detail::bn_plane_forward(in.re.data(), out.re.data(), saved->xhat_re.data(), n, c,
                             plane, ch, gm.re[ch], bt.re[ch], mean_r, inv_r);
    detail::bn_plane_forward(in.im.data(), out.im.data(), saved->xhat_im.data(), n, c,
                             plane, ch, gm.im[ch], bt.im[ch], mean_i, inv_i);
  }

  const bool rg = t.requires_grad(z) || t.requires_grad(gamma) || t.requires_grad(beta);
  Var o = t.make_result(std::move(out), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(o);
      if (!g) return;
      const CTensor& gmv = tt.value(gamma);
      const double mm = static_cast<double>(n) * plane;
      auto run_part = [&](const std::vector<double>& gout, const std::vector<double>& xhat,
                          const std::vector<double>& inv_std, const std::vector<double>& gv,
                          std::vector<double>* gz, std::vector<double>* ggamma,
                          std::vector<double>* gbeta) {
        for (int ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gh = 0.0;
          for (int b = 0; b < n; ++b) {
            const std::size_t base = static_cast<std::size_t>(b * c + ch) * plane;
            for (int i = 0; i < plane; ++i) {
              sum_g += gout[base + i];
              sum_gh += gout[base + i] * xhat[base + i];
            }
          }
          if (gbeta) (*gbeta)[ch] += sum_g;
          if (ggamma) (*ggamma)[ch] += sum_gh;
          if (gz) {
            const double gam = gv[ch];
            if (saved->training) {
              // d/dx of ((x - mean)/std * gamma + beta) through batch stats.
              for (int b = 0; b < n; ++b) {
                const std::size_t base = static_cast<std::size_t>(b * c + ch) * plane;
                for (int i = 0; i < plane; ++i) {
                  const double dxhat = gout[base + i] * gam;
                  (*gz)[base + i] += inv_std[ch] *
                                     (dxhat - (gam * sum_g + xhat[base + i] * gam * sum_gh) / mm);
                }
              }
            } else {
              for (int b = 0; b < n; ++b) {
                const std::size_t base = static_cast<std::size_t>(b * c + ch) * plane;
                for (int i = 0; i < plane; ++i)
                  (*gz)[base + i] += gout[base + i] * gam * inv_std[ch];
              }
            }
          }
        }
      };
      std::vector<double>* gz_re = nullptr;
      std::vector<double>* gz_im = nullptr;
      std::vector<double>* gg_re = nullptr;
      std::vector<double>* gg_im = nullptr;
      std::vector<double>* gb_re = nullptr;
      std::vector<double>* gb_im = nullptr;
      if (tt.requires_grad(z)) {
        GradPair& gz = tt.grad(z);
        gz_re = &gz.re;
        gz_im = &gz.im;
      }
      if (tt.requires_grad(gamma)) {
        GradPair& gg = tt.grad(gamma);
        gg_re = &gg.re;
        gg_im = &gg.im;
      }
      if (tt.requires_grad(beta)) {
        GradPair& gb = tt.grad(beta);
        gb_re = &gb.re;
        gb_im = &gb.im;
      }
      run_part(g->re, saved->xhat_re, saved->inv_std_re, gmv.re, gz_re, gg_re, gb_re);
      run_part(g->im, saved->xhat_im, saved->inv_std_im, gmv.im, gz_im, gg_im, gb_im);
    });
  return o;
}

// ---------------------------------------------------------------------------
// Magnitude-and-phase pooling.
//
// Each element is scored as |r|^2 (+ 1/|r|^2 when |r| > delta) + 2cos(2θ)
// and the window's highest-scoring ORIGINAL element is emitted unchanged,
// its flat index recorded for unpooling. Ties go to the first element in
// row-major window order.

inline double pool_score(double x, double y, double delta) {
  const double r = std::sqrt(x * x + y * y);
  const double theta = angle_of(x, y);
  double s = r * r;
  if (r > delta) s += 1.0 / (r * r);
  return s + 2.0 * std::cos(2.0 * theta);
}

struct PoolRecord {
  int window = 2;
  int stride = 2;
  int in_h = 0, in_w = 0;           // spatial dims of the pooled input
  std::vector<std::uint32_t> index;  // per output element: flat iy*in_w+ix
};

inline std::pair<CTensor, PoolRecord> complex_max_pool2d_forward(
    const CTensor& z, int window, int stride, double delta,
    BoundaryMonitor* monitor = nullptr) {
  if (z.shape.size() != 4) throw ShapeError("pool: input must be NCHW");
  if (window < 1 || stride < 1) throw ShapeError("pool: window and stride must be >= 1");
  const int n = static_cast<int>(z.shape[0]);
  const int c = static_cast<int>(z.shape[1]);
  const int h = static_cast<int>(z.shape[2]);
  const int w = static_cast<int>(z.shape[3]);
  if (h < window || w < window) throw ShapeError("pool: input smaller than window");
  const int oh = (h - window) / stride + 1;
  const int ow = (w - window) / stride + 1;

  CTensor out(Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(c),
                    static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  PoolRecord rec;
  rec.window = window;
  rec.stride = stride;
  rec.in_h = h;
  rec.in_w = w;
  rec.index.resize(static_cast<std::size_t>(n) * c * oh * ow);

  const int plane = h * w, oplane = oh * ow;
  // per-window scratch for boundary monitoring
  std::vector<double> scores;
  if (monitor) scores.resize(static_cast<std::size_t>(window) * window);
  std::size_t oidx = 0;
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* zr = z.re.data() + (b * c + ch) * plane;
      const double* zi = z.im.data() + (b * c + ch) * plane;
      double* or_ = out.re.data() + (b * c + ch) * oplane;
      double* oi_ = out.im.data() + (b * c + ch) * oplane;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++oidx) {
          double best = -std::numeric_limits<double>::infinity();
          int best_flat = -1, best_k = -1;
          int k = 0;
          for (int ky = 0; ky < window; ++ky) {
            const int iy = oy * stride + ky;
            for (int kx = 0; kx < window; ++kx, ++k) {
              const int ix = ox * stride + kx;
              const int flat = iy * w + ix;
              const double s = pool_score(zr[flat], zi[flat], delta);
              if (monitor) {
                scores[k] = s;
                if (zr[flat] != 0.0 || zi[flat] != 0.0) {
                  const double r = std::sqrt(zr[flat] * zr[flat] + zi[flat] * zi[flat]);
                  monitor->observe_pool_delta(std::abs(r - delta));
                }
              }
              if (s > best) {
                best = s;
                best_flat = flat;
                best_k = k;
              }
            }
          }
          if (monitor) {
            // A selection kink needs a competitor whose score can separate
            // from the winner's. Exact ties are structurally locked values
            // (all-zero windows, equal dead-field conv outputs) that move
            // in lockstep; only near-ties invalidate finite differences.
            for (int i = 0; i < k; ++i) {
              if (i == best_k || best - scores[i] == 0.0) continue;
              monitor->observe_pool_margin(best - scores[i]);
            }
          }
          rec.index[oidx] = static_cast<std::uint32_t>(best_flat);
          or_[oy * ow + ox] = zr[best_flat];
          oi_[oy * ow + ox] = zi[best_flat];
        }
      }
    }
  }
  return {std::move(out), std::move(rec)};
}

// Tape wrapper; the selection carries no score gradient, the upstream
// gradient routes entirely to each window's selected element.
inline Var complex_max_pool2d(Tape& t, Var z, int window, int stride, double delta,
                              PoolRecord* record_out = nullptr) {
  auto [out, rec] = complex_max_pool2d_forward(t.value(z), window, stride, delta,
                                               t.monitor);
  if (record_out) *record_out = rec;
  const bool rg = t.requires_grad(z);
  const Shape out_shape = out.shape;
  Var o = t.make_result(std::move(out), rg);
  if (rg) {
    auto rec_ptr = std::make_shared<PoolRecord>(std::move(rec));
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(o);
      if (!g) return;
      GradPair& gz = tt.grad(z);
      const std::size_t nc = out_shape[0] * out_shape[1];
      const std::size_t oplane = out_shape[2] * out_shape[3];
      const std::size_t plane =
          static_cast<std::size_t>(rec_ptr->in_h) * rec_ptr->in_w;
      std::size_t oidx = 0;
      for (std::size_t p = 0; p < nc; ++p) {
        const std::size_t base = p * plane;
        for (std::size_t i = 0; i < oplane; ++i, ++oidx) {
          gz.re[base + rec_ptr->index[oidx]] += g->re[oidx];
          gz.im[base + rec_ptr->index[oidx]] += g->im[oidx];
        }
      }
    });
  }
  return o;
}

// Scatter of pooled values back to their recorded positions; zero elsewhere.
inline CTensor complex_max_unpool2d_forward(const CTensor& z, const PoolRecord& rec,
                                            int out_h, int out_w) {
  if (z.shape.size() != 4) throw ShapeError("unpool: input must be NCHW");
  const std::size_t n = z.shape[0], c = z.shape[1];
  const std::size_t oplane = z.shape[2] * z.shape[3];
  if (rec.index.size() != z.numel())
    throw ShapeError("unpool: record does not match input shape");
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  CTensor out(Shape{n, c, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)});
  std::size_t oidx = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t base = p * plane;
    for (std::size_t i = 0; i < oplane; ++i, ++oidx) {
      const std::uint32_t flat = rec.index[oidx];
      if (flat >= plane) throw ShapeError("unpool: recorded index out of range");
      out.re[base + flat] += z.re[oidx];
      out.im[base + flat] += z.im[oidx];
    }
  }
  return out;
}

inline Var complex_max_unpool2d(Tape& t, Var z, const PoolRecord& rec, int out_h,
                                int out_w) {
  CTensor out = complex_max_unpool2d_forward(t.value(z), rec, out_h, out_w);
  const bool rg = t.requires_grad(z);
  Var o = t.make_result(std::move(out), rg);
  if (rg) {
    auto rec_ptr = std::make_shared<PoolRecord>(rec);
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(o);
      if (!g) return;
      const CTensor& zin = tt.value(z);
      GradPair& gz = tt.grad(z);
      const std::size_t nc = zin.shape[0] * zin.shape[1];
      const std::size_t oplane = zin.shape[2] * zin.shape[3];
      std::size_t oidx = 0;
      for (std::size_t p = 0; p < nc; ++p) {
        const std::size_t base = p * plane;
        for (std::size_t i = 0; i < oplane; ++i, ++oidx) {
          gz.re[oidx] += g->re[base + rec_ptr->index[oidx]];
          gz.im[oidx] += g->im[base + rec_ptr->index[oidx]];
        }
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// Channel concatenation of NCHW tensors.

inline Var concat_channels(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const CTensor& first = t.value(parts[0]);
  if (first.shape.size() != 4) throw ShapeError("concat: inputs must be NCHW");
  const std::size_t n = first.shape[0], h = first.shape[2], w = first.shape[3];
  std::size_t total_c = 0;
  bool rg = false;
  for (Var p : parts) {
    const Shape& s = t.value(p).shape;
    if (s.size() != 4 || s[0] != n || s[2] != h || s[3] != w)
      throw ShapeError("concat: incompatible input shapes");
    total_c += s[1];
    rg = rg || t.requires_grad(p);
  }
  CTensor out(Shape{n, total_c, h, w});
  const std::size_t plane = h * w;
  std::size_t c_off = 0;
  for (Var p : parts) {
    const CTensor& v = t.value(p);
    const std::size_t c = v.shape[1];
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t src = (b * c + ch) * plane;
        const std::size_t dst = (b * total_c + c_off + ch) * plane;
        std::copy_n(v.re.begin() + src, plane, out.re.begin() + dst);
        std::copy_n(v.im.begin() + src, plane, out.im.begin() + dst);
      }
    }
    c_off += c;
  }
  Var o = t.make_result(std::move(out), rg);
  if (rg) {
    const std::vector<Var> parts_copy = parts;
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(o);
      if (!g) return;
      std::size_t off = 0;
      for (Var p : parts_copy) {
        const CTensor& v = tt.value(p);
        const std::size_t c = v.shape[1];
        if (tt.requires_grad(p)) {
          GradPair& gp = tt.grad(p);
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t src = (b * total_c + off + ch) * plane;
              const std::size_t dst = (b * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                gp.re[dst + i] += g->re[src + i];
                gp.im[dst + i] += g->im[src + i];
              }
            }
          }
        }
        off += c;
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// Blocks

// Conv + batch norm + CReLU parameters for one unit.
struct CbrVars {
  Var w, b, gamma, beta;
  BatchNormState* bn = nullptr;
};

inline Var cbr_block(Tape& t, Var z, const CbrVars& p, const ConvGeom& g, bool training) {
  Var y = complex_conv2d(t, z, p.w, p.b, g);
  y = complex_batch_norm(t, y, p.gamma, p.beta, *p.bn, training);
  return crelu(t, y);
}

// Identity skip around two stacked CBR units; channel-preserving.
inline Var residual_block1(Tape& t, Var z, const CbrVars& c1, const CbrVars& c2,
                           const ConvGeom& g, bool training) {
  Var y = cbr_block(t, z, c1, g, training);
  y = cbr_block(t, y, c2, g, training);
  return crelu(t, add(t, y, z));
}

// Projection skip (1x1 conv + batch norm) around two stacked CBR units;
// allows a channel change.
struct ProjectionVars {
  Var w, b, gamma, beta;
  BatchNormState* bn = nullptr;
};

inline Var residual_block2(Tape& t, Var z, const CbrVars& c1, const CbrVars& c2,
                           const ProjectionVars& proj, const ConvGeom& g, bool training) {
  Var y = cbr_block(t, z, c1, g, training);
  y = cbr_block(t, y, c2, g, training);
  ConvGeom pw;
  Var s = complex_conv2d(t, z, proj.w, proj.b, pw);
  s = complex_batch_norm(t, s, proj.gamma, proj.beta, *proj.bn, training);
  return crelu(t, add(t, y, s));
}

// Depthwise dilated complex conv (one kxk filter per channel), then a 1x1
// pointwise complex conv mixing channels.
inline Var separable_atrous_conv(Tape& t, Var z, Var dw_w, Var dw_b, Var pw_w, Var pw_b,
                                 int dilation) {
  const int channels = static_cast<int>(t.value(z).shape[1]);
  const int k = static_cast<int>(t.value(dw_w).shape[2]);
  ConvGeom dw;
  dw.dilation = dilation;
  dw.pad = same_pad(k, dilation);
  dw.groups = channels;
  Var y = complex_conv2d(t, z, dw_w, dw_b, dw);
  ConvGeom pw;
  return complex_conv2d(t, y, pw_w, pw_b, pw);
}

}  // namespace fc2mfn
