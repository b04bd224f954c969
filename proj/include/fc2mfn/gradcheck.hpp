// Finite-difference verification suite: every layer operation plus the
// full model, checked at random points sampled away from CReLU and pooling
// switching boundaries.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fc2mfn/layers.hpp"
#include "fc2mfn/model.hpp"
#include "fc2mfn/rng.hpp"
#include "fc2mfn/training.hpp"

namespace fc2mfn {

struct CheckOutcome {
  std::string name;
  GradCheckReport report;
  int resamples = 0;
};

namespace detail {

inline CTensor random_ctensor(SplitMix64& g, Shape shape, double lo = -1.0,
                              double hi = 1.0) {
  CTensor t(std::move(shape));
  for (double& v : t.re) v = g.uniform(lo, hi);
  for (double& v : t.im) v = g.uniform(lo, hi);
  return t;
}

using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;
using Sampler = std::function<std::vector<CTensor>(SplitMix64&)>;

// Rejects sample points whose forward pass comes within `margin` of a
// non-differentiable boundary, then runs the checker.
inline CheckOutcome rejection_check(const std::string& name, const LossFn& fn,
                                    const Sampler& sample, SplitMix64& rng,
                                    double step = 1e-6, double margin = 1e-4) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::vector<CTensor> params = sample(rng);
    BoundaryMonitor mon;
    {
      Tape t;
      t.monitor = &mon;
      std::vector<Var> vars;
      for (const CTensor& p : params) vars.push_back(t.leaf(p, false));
      fn(t, vars);
    }
    if (mon.min_distance() < margin) continue;
    return CheckOutcome{name, grad_check(fn, std::move(params), step), attempt};
  }
  throw AutodiffError("gradcheck: could not sample away from boundaries for " + name);
}

// E = Re(probe^H out), linear in the op output.
inline Var probe_loss(Tape& t, Var out, const CTensor& probe) {
  Var p = t.leaf(probe, false);
  return re_part(t, herm_dot_op(t, p, out));
}

}  // namespace detail

// Model geometry small enough for exhaustive finite differences.
inline ModelConfig gradcheck_model_config() {
  ModelConfig cfg;
  cfg.image_h = cfg.image_w = 8;
  cfg.base_width = 2;
  cfg.stage_widths = {2, 4};
  cfg.aspp_dilations = {1, 2, 3, 4};
  cfg.num_classes = 3;
  cfg.delta = 1.0;
  return cfg;
}

inline std::vector<CheckOutcome> run_gradient_suite(std::uint64_t seed,
                                                    double step = 1e-6,
                                                    double margin = 1e-4) {
  using detail::probe_loss;
  using detail::random_ctensor;
  std::vector<CheckOutcome> out;
  SplitMix64 rng(SplitMix64::mix(seed ^ 0x5eedu));

  auto check = [&](const std::string& name, const detail::LossFn& fn,
                   const detail::Sampler& sample) {
    out.push_back(detail::rejection_check(name, fn, sample, rng, step, margin));
  };

  // elementwise ops
  {
    const Shape s{2, 3, 4};
    CTensor probe = random_ctensor(rng, s);
    check("cmul",
          [probe](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t, cmul_op(t, v[0], v[1]), probe);
          },
          [s](SplitMix64& g) {
            return std::vector<CTensor>{random_ctensor(g, s), random_ctensor(g, s)};
          });
    check("cmul_scalar_broadcast",
          [probe](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t, cmul_op(t, v[0], v[1]), probe);
          },
          [s](SplitMix64& g) {
            return std::vector<CTensor>{random_ctensor(g, Shape{}), random_ctensor(g, s)};
          });
    check("herm_dot",
          [](Tape& t, const std::vector<Var>& v) {
            return re_part(t, herm_dot_op(t, v[0], v[1]));
          },
          [s](SplitMix64& g) {
            return std::vector<CTensor>{random_ctensor(g, s), random_ctensor(g, s)};
          });
    check("add_sub_scale",
          [probe](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t, scale(t, sub(t, add(t, v[0], v[1]), v[1]), 0.75), probe);
          },
          [s](SplitMix64& g) {
            return std::vector<CTensor>{random_ctensor(g, s), random_ctensor(g, s)};
          });
  }

  // convolution variants: input (2,2,6,6), weights differentiated too
  {
    const Shape in_s{2, 2, 6, 6};
    auto conv_check = [&](const std::string& name, Shape w_s, ConvGeom g, Shape out_s) {
      CTensor probe = random_ctensor(rng, out_s);
      check(name,
            [probe, g](Tape& t, const std::vector<Var>& v) {
              return probe_loss(t, complex_conv2d(t, v[0], v[1], v[2], g), probe);
            },
            [in_s, w_s](SplitMix64& gg) {
              return std::vector<CTensor>{random_ctensor(gg, in_s),
                                          random_ctensor(gg, w_s),
                                          random_ctensor(gg, Shape{w_s[0]})};
            });
    };
    ConvGeom same3;
    same3.pad = same_pad(3, 1);
    conv_check("conv3x3_same", Shape{3, 2, 3, 3}, same3, Shape{2, 3, 6, 6});
    ConvGeom strided;
    strided.stride = 2;
    conv_check("conv3x3_stride2_valid", Shape{3, 2, 3, 3}, strided, Shape{2, 3, 2, 2});
    ConvGeom dilated;
    dilated.dilation = 2;
    dilated.pad = same_pad(3, 2);
    conv_check("conv3x3_dilation2_same", Shape{3, 2, 3, 3}, dilated, Shape{2, 3, 6, 6});
    ConvGeom depthwise;
    depthwise.groups = 2;
    depthwise.pad = same_pad(3, 1);
    conv_check("conv3x3_depthwise", Shape{2, 1, 3, 3}, depthwise, Shape{2, 2, 6, 6});
    ConvGeom pointwise;
    conv_check("conv1x1_pointwise", Shape{4, 2, 1, 1}, pointwise, Shape{2, 4, 6, 6});
  }

  // crelu
  {
    const Shape s{2, 3, 4, 4};
    CTensor probe = random_ctensor(rng, s);
    check("crelu",
          [probe](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t, crelu(t, v[0]), probe);
          },
          [s](SplitMix64& g) { return std::vector<CTensor>{random_ctensor(g, s)}; });
  }

  // batch norm, training and inference modes
  for (bool training : {true, false}) {
    const Shape s{2, 3, 4, 4};
    CTensor probe = random_ctensor(rng, s);
    auto state = std::make_shared<BatchNormState>(3);
    for (int c = 0; c < 3; ++c) {
      state->mean_re[c] = 0.1 * c;
      state->mean_im[c] = -0.05 * c;
      state->var_re[c] = 1.0 + 0.2 * c;
      state->var_im[c] = 1.5 - 0.1 * c;
    }
    check(training ? "batch_norm_training" : "batch_norm_inference",
          [probe, state, training](Tape& t, const std::vector<Var>& v) {
            return probe_loss(
                t, complex_batch_norm(t, v[0], v[1], v[2], *state, training), probe);
          },
          [s](SplitMix64& g) {
            return std::vector<CTensor>{random_ctensor(g, s), random_ctensor(g, Shape{3}),
                                        random_ctensor(g, Shape{3})};
          });
  }

  // pooling (selection routing) and unpooling (scatter adjoint)
  {
    const Shape s{2, 2, 6, 6};
    CTensor probe = random_ctensor(rng, Shape{2, 2, 3, 3});
    check("pool2x2",
          [probe](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t, complex_max_pool2d(t, v[0], 2, 2, 1.0), probe);
          },
          [s](SplitMix64& g) { return std::vector<CTensor>{random_ctensor(g, s)}; });
    CTensor probe_up = random_ctensor(rng, s);
    check("pool_unpool_roundtrip",
          [probe_up](Tape& t, const std::vector<Var>& v) {
            PoolRecord rec;
            Var y = complex_max_pool2d(t, v[0], 2, 2, 1.0, &rec);
            return probe_loss(t, complex_max_unpool2d(t, y, rec, 6, 6), probe_up);
          },
          [s](SplitMix64& g) { return std::vector<CTensor>{random_ctensor(g, s)}; });
  }

  // blocks
  {
    const Shape s{1, 2, 6, 6};
    ConvGeom g3;
    g3.pad = same_pad(3, 1);
    auto bn1 = std::make_shared<BatchNormState>(2);
    auto bn2 = std::make_shared<BatchNormState>(2);
    auto bn3 = std::make_shared<BatchNormState>(2);
    CTensor probe = random_ctensor(rng, s);
    auto block_params = [s](SplitMix64& g) {
      std::vector<CTensor> p;
      p.push_back(random_ctensor(g, s));                    // input
      for (int unit = 0; unit < 2; ++unit) {
        p.push_back(random_ctensor(g, Shape{2, 2, 3, 3}));  // w
        p.push_back(random_ctensor(g, Shape{2}));           // b
        p.push_back(random_ctensor(g, Shape{2}));           // gamma
        p.push_back(random_ctensor(g, Shape{2}));           // beta
      }
      return p;
    };
    auto cbr_vars = [](const std::vector<Var>& v, int base, BatchNormState* st) {
      return CbrVars{v[base], v[base + 1], v[base + 2], v[base + 3], st};
    };
    check("cbr_block",
          [probe, g3, bn1, cbr_vars](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t, cbr_block(t, v[0], cbr_vars(v, 1, bn1.get()), g3, true),
                              probe);
          },
          block_params);
    check("residual_block1",
          [probe, g3, bn1, bn2, cbr_vars](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t,
                              residual_block1(t, v[0], cbr_vars(v, 1, bn1.get()),
                                              cbr_vars(v, 5, bn2.get()), g3, true),
                              probe);
          },
          block_params);
    check("residual_block2",
          [probe, g3, bn1, bn2, bn3, cbr_vars](Tape& t, const std::vector<Var>& v) {
            ProjectionVars proj{v[9], v[10], v[11], v[12], bn3.get()};
            return probe_loss(t,
                              residual_block2(t, v[0], cbr_vars(v, 1, bn1.get()),
                                              cbr_vars(v, 5, bn2.get()), proj, g3, true),
                              probe);
          },
          [s, block_params](SplitMix64& g) {
            std::vector<CTensor> p = block_params(g);
            p.push_back(random_ctensor(g, Shape{2, 2, 1, 1}));  // proj w
            p.push_back(random_ctensor(g, Shape{2}));           // proj b
            p.push_back(random_ctensor(g, Shape{2}));           // proj gamma
            p.push_back(random_ctensor(g, Shape{2}));           // proj beta
            return p;
          });
    check("separable_atrous_conv",
          [probe](Tape& t, const std::vector<Var>& v) {
            return probe_loss(t, separable_atrous_conv(t, v[0], v[1], v[2], v[3], v[4], 2),
                              probe);
          },
          [s](SplitMix64& g) {
            return std::vector<CTensor>{
                random_ctensor(g, s), random_ctensor(g, Shape{2, 1, 3, 3}),
                random_ctensor(g, Shape{2}), random_ctensor(g, Shape{2, 2, 1, 1}),
                random_ctensor(g, Shape{2})};
          });
  }

  // full model: all trainables plus the three inputs, trained-mode forward,
  // one-hot loss
  {
    const ModelConfig cfg = gradcheck_model_config();
    auto model = std::make_shared<Fc2mfn>(Fc2mfn::build(cfg, rng.next()));
    const std::size_t np = model->params().size();
    LabelMap labels(cfg.image_h, cfg.image_w);
    for (int& v : labels.v) v = static_cast<int>(rng.below(cfg.num_classes));
    CTensor target = complex_one_hot(labels, cfg.num_classes);
    CTensor target_batch(Shape{1, static_cast<std::size_t>(cfg.num_classes),
                               static_cast<std::size_t>(cfg.image_h),
                               static_cast<std::size_t>(cfg.image_w)});
    target_batch.re = target.re;
    target_batch.im = target.im;
    check("full_model",
          [model, np, target_batch](Tape& t, const std::vector<Var>& v) {
            std::vector<Var> pv(v.begin(), v.begin() + np);
            Var out = model->forward_with(t, pv, v[np], v[np + 1], v[np + 2], true);
            return tape_loss(t, out, target_batch);
          },
          [model, cfg](SplitMix64& g) {
            std::vector<CTensor> p;
            for (const ParamSpec& spec : model->param_specs()) {
              // fresh draw per attempt, scaled like the real initializer
              const double s =
                  spec.init == ParamInit::uniform_fan_in ? std::sqrt(1.0 / spec.fan_in) : 0.5;
              p.push_back(random_ctensor(g, spec.shape, -s, s));
            }
            const Shape in_s{1, 1, static_cast<std::size_t>(cfg.image_h),
                             static_cast<std::size_t>(cfg.image_w)};
            p.push_back(random_ctensor(g, in_s));
            p.push_back(random_ctensor(g, in_s));
            p.push_back(random_ctensor(g, in_s));
            return p;
          });
  }

  return out;
}

}  // namespace fc2mfn
