// Reverse-mode differentiation over the real parameterization of complex
// computations: each complex tensor is differentiated as two independent
// real planes (dE/d(real), dE/d(imag)). The loss is a real scalar, so this
// matches the conjugate Wirtinger gradient up to a constant factor and
// stays valid through non-holomorphic layers.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fc2mfn/ctensor.hpp"

namespace fc2mfn {

struct AutodiffError : std::logic_error {
  using std::logic_error::logic_error;
};

struct GradPair {
  std::vector<double> re, im;

  explicit GradPair(std::size_t n = 0) : re(n, 0.0), im(n, 0.0) {}
};

// Tracks how close a forward pass came to a gradient-invalidating kink:
// CReLU part sign changes, pooling selection margins, and the pooling
// score branch at |r| = delta. Finite differences are rejected and
// resampled when any distance falls under the caller's threshold.
struct BoundaryMonitor {
  double min_crelu = std::numeric_limits<double>::infinity();
  double min_pool_margin = std::numeric_limits<double>::infinity();
  double min_pool_delta = std::numeric_limits<double>::infinity();

  void observe_crelu(double d) {
    if (d < min_crelu) min_crelu = d;
  }
  void observe_pool_margin(double d) {
    if (d < min_pool_margin) min_pool_margin = d;
  }
  void observe_pool_delta(double d) {
    if (d < min_pool_delta) min_pool_delta = d;
  }
  double min_distance() const {
    return std::min(min_crelu, std::min(min_pool_margin, min_pool_delta));
  }
};

struct Var {
  std::uint32_t id = 0;
};

class Tape {
 public:
  BoundaryMonitor* monitor = nullptr;

  Var leaf(CTensor value, bool requires_grad = false) {
    return push(std::move(value), requires_grad);
  }

  const CTensor& value(Var v) const { return slots_[v.id].value; }
  bool requires_grad(Var v) const { return slots_[v.id].requires_grad; }

  Var make_result(CTensor value, bool requires_grad) {
    return push(std::move(value), requires_grad);
  }

  void record(std::function<void(Tape&)> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  // Gradient planes of v, allocated to zeros on first touch.
  GradPair& grad(Var v) {
    Slot& s = slots_[v.id];
    if (!s.grad_allocated) {
      s.grad = GradPair(s.value.numel());
      s.grad_allocated = true;
    }
    return s.grad;
  }

  // Null when no gradient ever flowed into v.
  const GradPair* grad_if(Var v) const {
    const Slot& s = slots_[v.id];
    return s.grad_allocated ? &s.grad : nullptr;
  }

  void backward(Var loss) {
    if (backward_done_)
      throw AutodiffError("backward called twice without re-execution");
    const CTensor& l = value(loss);
    if (l.numel() != 1 || l.im[0] != 0.0)
      throw AutodiffError("backward requires a real scalar loss");
    backward_done_ = true;
    grad(loss).re[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(*this);
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Slot {
    CTensor value;
    bool requires_grad = false;
    bool grad_allocated = false;
    GradPair grad;
  };

  Var push(CTensor value, bool requires_grad) {
    slots_.push_back(Slot{std::move(value), requires_grad, false, GradPair{}});
    return Var{static_cast<std::uint32_t>(slots_.size() - 1)};
  }

  std::vector<Slot> slots_;
  std::vector<std::function<void(Tape&)>> nodes_;
  bool backward_done_ = false;
};

namespace detail {

inline void axpy(std::vector<double>& acc, const std::vector<double>& g, double c = 1.0) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * g[i];
}

}  // namespace detail

inline Var add(Tape& t, Var a, Var b) {
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var out = t.make_result(cadd(t.value(a), t.value(b)), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(out);
      if (!g) return;
      for (Var v : {a, b}) {
        if (!tt.requires_grad(v)) continue;
        GradPair& gv = tt.grad(v);
        detail::axpy(gv.re, g->re);
        detail::axpy(gv.im, g->im);
      }
    });
  return out;
}

inline Var sub(Tape& t, Var a, Var b) {
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var out = t.make_result(csub(t.value(a), t.value(b)), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(out);
      if (!g) return;
      if (tt.requires_grad(a)) {
        GradPair& ga = tt.grad(a);
        detail::axpy(ga.re, g->re);
        detail::axpy(ga.im, g->im);
      }
      if (tt.requires_grad(b)) {
        GradPair& gb = tt.grad(b);
        detail::axpy(gb.re, g->re, -1.0);
        detail::axpy(gb.im, g->im, -1.0);
      }
    });
  return out;
}

namespace detail {

// d/d(a) of z = a*b given upstream (gr, gi), accumulated at index ia of a.
inline void cmul_adjoint(GradPair& ga, std::size_t ia, double br, double bi, double gr,
                         double gi) {
  ga.re[ia] += gr * br + gi * bi;
  ga.im[ia] += -gr * bi + gi * br;
}

}  // namespace detail

// Elementwise complex product; one operand may be scalar.
inline Var cmul_op(Tape& t, Var a, Var b) {
  const CTensor& A = t.value(a);
  const CTensor& B = t.value(b);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var out = t.make_result(cmul(A, B), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(out);
      if (!g) return;
      const CTensor& av = tt.value(a);
      const CTensor& bv = tt.value(b);
      const std::size_t n = tt.value(out).numel();
      if (tt.requires_grad(a)) {
        GradPair& ga = tt.grad(a);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ia = av.is_scalar() ? 0 : i;
          const std::size_t ib = bv.is_scalar() ? 0 : i;
          detail::cmul_adjoint(ga, ia, bv.re[ib], bv.im[ib], g->re[i], g->im[i]);
        }
      }
      if (tt.requires_grad(b)) {
        GradPair& gb = tt.grad(b);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ia = av.is_scalar() ? 0 : i;
          const std::size_t ib = bv.is_scalar() ? 0 : i;
          detail::cmul_adjoint(gb, ib, av.re[ia], av.im[ia], g->re[i], g->im[i]);
        }
      }
    });
  return out;
}

// sum_i conj(a_i) b_i as a rank-0 complex scalar.
inline Var herm_dot_op(Tape& t, Var a, Var b) {
  const std::complex<double> d = herm_dot(t.value(a), t.value(b));
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var out = t.make_result(CTensor::scalar(d.real(), d.imag()), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(out);
      if (!g) return;
      const double gr = g->re[0], gi = g->im[0];
      const CTensor& av = tt.value(a);
      const CTensor& bv = tt.value(b);
      if (tt.requires_grad(a)) {
        GradPair& ga = tt.grad(a);
        for (std::size_t i = 0; i < av.numel(); ++i) {
          ga.re[i] += gr * bv.re[i] + gi * bv.im[i];
          ga.im[i] += gr * bv.im[i] - gi * bv.re[i];
        }
      }
      if (tt.requires_grad(b)) {
        GradPair& gb = tt.grad(b);
        for (std::size_t i = 0; i < bv.numel(); ++i) {
          gb.re[i] += gr * av.re[i] - gi * av.im[i];
          gb.im[i] += gr * av.im[i] + gi * av.re[i];
        }
      }
    });
  return out;
}

inline Var scale(Tape& t, Var a, double c) {
  const CTensor& A = t.value(a);
  CTensor out(A.shape);
  for (std::size_t i = 0; i < A.numel(); ++i) {
    out.re[i] = c * A.re[i];
    out.im[i] = c * A.im[i];
  }
  const bool rg = t.requires_grad(a);
  Var o = t.make_result(std::move(out), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(o);
      if (!g) return;
      GradPair& ga = tt.grad(a);
      detail::axpy(ga.re, g->re, c);
      detail::axpy(ga.im, g->im, c);
    });
  return o;
}

// Real part, as a complex tensor with zero imaginary plane.
inline Var re_part(Tape& t, Var a) {
  const CTensor& A = t.value(a);
  CTensor out(A.shape);
  out.re = A.re;
  const bool rg = t.requires_grad(a);
  Var o = t.make_result(std::move(out), rg);
  if (rg)
    t.record([=](Tape& tt) {
      const GradPair* g = tt.grad_if(o);
      if (!g) return;
      detail::axpy(tt.grad(a).re, g->re);
    });
  return o;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;   // index into the params vector
  std::size_t worst_coord = 0;   // flat coordinate, real plane then imag plane
  double analytic = 0.0;
  double central_diff = 0.0;
};

// fn builds the scalar loss on the given tape from leaf vars matching
// `params`. Returns the max over all real coordinates of
// |analytic - central_diff| / max(1, |central_diff|).
template <typename Fn>
GradCheckReport grad_check(Fn&& fn, std::vector<CTensor> params, double step = 1e-6) {
  if (step <= 0.0) throw AutodiffError("grad_check: step must be positive");

  auto eval = [&](const std::vector<CTensor>& p) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(p.size());
    for (const CTensor& c : p) vars.push_back(t.leaf(c, false));
    Var loss = fn(t, vars);
    const CTensor& l = t.value(loss);
    if (l.numel() != 1 || l.im[0] != 0.0)
      throw AutodiffError("grad_check: fn must return a real scalar");
    return l.re[0];
  };

  // Analytic pass.
  std::vector<GradPair> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const CTensor& c : params) vars.push_back(t.leaf(c, true));
    Var loss = fn(t, vars);
    const CTensor& l = t.value(loss);
    if (l.numel() != 1 || l.im[0] != 0.0)
      throw AutodiffError("grad_check: fn must return a real scalar");
    t.backward(loss);
    for (Var v : vars) analytic.push_back(t.grad(v));
  }

  GradCheckReport rep;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::size_t n = params[p].numel();
    for (std::size_t c = 0; c < 2 * n; ++c) {
      double& coord = c < n ? params[p].re[c] : params[p].im[c - n];
      const double orig = coord;
      coord = orig + step;
      const double f1 = eval(params);
      coord = orig - step;
      const double f2 = eval(params);
      coord = orig;
      const double fd = (f1 - f2) / (2.0 * step);
      const double an = c < n ? analytic[p].re[c] : analytic[p].im[c - n];
      const double err = std::abs(an - fd) / std::max(1.0, std::abs(fd));
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_param = p;
        rep.worst_coord = c;
        rep.analytic = an;
        rep.central_diff = fd;
      }
    }
  }
  return rep;
}

}  // namespace fc2mfn
