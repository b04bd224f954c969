// Fully complex-valued learning: complex one-hot targets, complex error,
// real scalar loss E = Re(e^H e)/(2n), real-channel argmax decoding, Adam
// over the real parameterization, the training loop, and segmentation
// metrics.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fc2mfn/container.hpp"
#include "fc2mfn/model.hpp"

namespace fc2mfn {

struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 2;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 42;
  int eval_interval = 5;

  void validate() const {
    if (learning_rate <= 0.0) throw ShapeError("train: learning_rate must be positive");
    if (batch_size < 1) throw ShapeError("train: batch_size must be >= 1");
    if (epochs < 0) throw ShapeError("train: epochs must be >= 0");
    if (eval_interval < 1) throw ShapeError("train: eval_interval must be >= 1");
  }
};

struct LabelMap {
  int h = 0, w = 0;
  std::vector<int> v;

  LabelMap() = default;
  LabelMap(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0) {}

  int at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// One dataset item.
struct Sample {
  CTensor master;  // (1,H,W) complex
  CTensor slave;   // (1,H,W) complex
  RTensor phase;   // (H,W) real, values in (-pi, pi]
  LabelMap labels;
};

// ---------------------------------------------------------------------------
// Encoding / decoding

// Channel k at pixel t: 1+1i when label==k, else -1-1i.
inline CTensor complex_one_hot(const LabelMap& labels, int num_classes) {
  const std::size_t plane = static_cast<std::size_t>(labels.h) * labels.w;
  CTensor out(Shape{static_cast<std::size_t>(num_classes),
                    static_cast<std::size_t>(labels.h), static_cast<std::size_t>(labels.w)});
  std::fill(out.re.begin(), out.re.end(), -1.0);
  std::fill(out.im.begin(), out.im.end(), -1.0);
  for (std::size_t i = 0; i < plane; ++i) {
    const int c = labels.v[i];
    if (c < 0 || c >= num_classes)
      throw ShapeError("complex_one_hot: label " + std::to_string(c) + " out of range");
    out.re[static_cast<std::size_t>(c) * plane + i] = 1.0;
    out.im[static_cast<std::size_t>(c) * plane + i] = 1.0;
  }
  return out;
}

inline CTensor complex_error(const CTensor& target, const CTensor& prediction) {
  return csub(target, prediction);
}

// E = Re(e^H e) / (2n) with n the number of complex elements of e.
inline double real_loss(const CTensor& e) {
  const double n = static_cast<double>(e.numel());
  return herm_dot(e, e).real() / (2.0 * n);
}

// Per pixel, argmax over class channels of the REAL part; ties to the
// lowest class index. Accepts (K,H,W) or (N,K,H,W) with n selecting the item.
inline LabelMap decode_predictions(const CTensor& output, int item = 0) {
  Shape s = output.shape;
  std::size_t base = 0;
  if (s.size() == 4) {
    base = static_cast<std::size_t>(item) * s[1] * s[2] * s[3];
    s = {s[1], s[2], s[3]};
  }
  if (s.size() != 3) throw ShapeError("decode_predictions: expected (K,H,W)");
  const int k = static_cast<int>(s[0]);
  if (k < 1) throw ShapeError("decode_predictions: no class channels");
  const std::size_t plane = s[1] * s[2];
  LabelMap out(static_cast<int>(s[1]), static_cast<int>(s[2]));
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    double best_v = output.re[base + i];
    for (int c = 1; c < k; ++c) {
      const double v = output.re[base + static_cast<std::size_t>(c) * plane + i];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out.v[i] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
  double overall_accuracy = 0.0;
  double mean_pixel_accuracy = 0.0;
  double mean_iou = 0.0;
  std::map<int, double> iou_per_class;  // classes absent from GT and prediction omitted
  std::vector<long long> confusion;     // K x K, row = ground truth, col = prediction
  int num_classes = 0;

  std::string summary() const {
    std::ostringstream os;
    os << "oa=" << overall_accuracy << " mpa=" << mean_pixel_accuracy
       << " miou=" << mean_iou;
    for (const auto& [c, v] : iou_per_class) os << " iou_" << c << "=" << v;
    return os.str();
  }
};

inline MetricsReport metrics_from_confusion(const std::vector<long long>& cm, int k) {
  MetricsReport r;
  r.confusion = cm;
  r.num_classes = k;
  long long total = 0, correct = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) total += cm[static_cast<std::size_t>(i) * k + j];
  for (int i = 0; i < k; ++i) correct += cm[static_cast<std::size_t>(i) * k + i];
  r.overall_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  double iou_sum = 0.0, recall_sum = 0.0;
  int included = 0;
  for (int c = 0; c < k; ++c) {
    long long tp = cm[static_cast<std::size_t>(c) * k + c];
    long long fn = 0, fp = 0;
    for (int j = 0; j < k; ++j) {
      if (j == c) continue;
      fn += cm[static_cast<std::size_t>(c) * k + j];
      fp += cm[static_cast<std::size_t>(j) * k + c];
    }
    if (tp + fn + fp == 0) continue;  // absent from both GT and prediction
    const double iou = static_cast<double>(tp) / static_cast<double>(tp + fn + fp);
    const double recall =
        tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.iou_per_class[c] = iou;
    iou_sum += iou;
    recall_sum += recall;
    ++included;
  }
  if (included > 0) {
    r.mean_iou = iou_sum / included;
    r.mean_pixel_accuracy = recall_sum / included;
  }
  return r;
}

inline void accumulate_confusion(std::vector<long long>& cm, int k, const LabelMap& gt,
                                 const LabelMap& pred) {
  if (gt.h != pred.h || gt.w != pred.w)
    throw ShapeError("metrics: label map size mismatch");
  for (std::size_t i = 0; i < gt.v.size(); ++i)
    ++cm[static_cast<std::size_t>(gt.v[i]) * k + pred.v[i]];
}

// ---------------------------------------------------------------------------
// Batching

// Stack samples into model inputs; phase is lifted to complex with a zero
// imaginary plane.
struct Batch {
  CTensor master, slave, phase;
  CTensor target;  // complex one-hot (N,K,H,W)
};

inline Batch make_batch(const std::vector<const Sample*>& items, int num_classes) {
  const int n = static_cast<int>(items.size());
  const int h = items[0]->labels.h, w = items[0]->labels.w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Batch b{CTensor(Shape{static_cast<std::size_t>(n), 1, static_cast<std::size_t>(h),
                        static_cast<std::size_t>(w)}),
          CTensor(Shape{static_cast<std::size_t>(n), 1, static_cast<std::size_t>(h),
                        static_cast<std::size_t>(w)}),
          CTensor(Shape{static_cast<std::size_t>(n), 1, static_cast<std::size_t>(h),
                        static_cast<std::size_t>(w)}),
          CTensor(Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(num_classes),
                        static_cast<std::size_t>(h), static_cast<std::size_t>(w)})};
  for (int i = 0; i < n; ++i) {
    const Sample& s = *items[i];
    std::copy_n(s.master.re.begin(), plane, b.master.re.begin() + i * plane);
    std::copy_n(s.master.im.begin(), plane, b.master.im.begin() + i * plane);
    std::copy_n(s.slave.re.begin(), plane, b.slave.re.begin() + i * plane);
    std::copy_n(s.slave.im.begin(), plane, b.slave.im.begin() + i * plane);
    std::copy_n(s.phase.data.begin(), plane, b.phase.re.begin() + i * plane);
    const CTensor t = complex_one_hot(s.labels, num_classes);
    std::copy_n(t.re.begin(), t.numel(), b.target.re.begin() + i * t.numel());
    std::copy_n(t.im.begin(), t.numel(), b.target.im.begin() + i * t.numel());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<CTensor> m, v;  // planes aligned with the parameter planes
  long long t = 0;

  static AdamState init_like(const std::vector<CTensor>& params) {
    AdamState s;
    for (const CTensor& p : params) {
      s.m.emplace_back(p.shape);
      s.v.emplace_back(p.shape);
    }
    return s;
  }
};

// Standard Adam with bias correction, applied independently to every real
// scalar (real and imaginary parts are separate coordinates).
inline void adam_step(std::vector<CTensor>& params, const std::vector<GradPair>& grads,
                      AdamState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ShapeError("adam_step: missing gradient or state");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].re.size() != params[p].numel())
      throw ShapeError("adam_step: missing gradient for parameter " + std::to_string(p));
    auto update = [&](std::vector<double>& x, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        x[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_epsilon);
      }
    };
    update(params[p].re, grads[p].re, state.m[p].re, state.v[p].re);
    update(params[p].im, grads[p].im, state.m[p].im, state.v[p].im);
  }
}

// ---------------------------------------------------------------------------
// Loss on tape

inline Var tape_loss(Tape& t, Var prediction, const CTensor& target) {
  Var tgt = t.leaf(target, false);
  Var e = sub(t, tgt, prediction);
  Var h = herm_dot_op(t, e, e);
  return scale(t, re_part(t, h), 1.0 / (2.0 * static_cast<double>(target.numel())));
}

// ---------------------------------------------------------------------------
// Evaluation

inline MetricsReport evaluate(Fc2mfn& model, const std::vector<Sample>& samples,
                              double* mean_loss = nullptr) {
  const int k = model.config().num_classes;
  std::vector<long long> cm(static_cast<std::size_t>(k) * k, 0);
  double loss_sum = 0.0;
  for (const Sample& s : samples) {
    Tape t;
    Batch b = make_batch({&s}, k);
    Var out = model.forward(t, t.leaf(b.master), t.leaf(b.slave), t.leaf(b.phase),
                            /*training=*/false);
    if (mean_loss) loss_sum += real_loss(complex_error(b.target, t.value(out)));
    accumulate_confusion(cm, k, s.labels, decode_predictions(t.value(out)));
  }
  if (mean_loss) *mean_loss = samples.empty() ? 0.0 : loss_sum / samples.size();
  return metrics_from_confusion(cm, k);
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
  std::optional<MetricsReport> metrics;
};

struct TrainResult {
  AdamState adam;
  std::uint64_t seed = 0;
  std::vector<std::string> log;
  std::vector<EpochStats> history;
};

// Per-epoch log line; the optional fields appear on evaluation epochs.
inline std::string format_epoch_line(const EpochStats& e) {
  std::ostringstream os;
  os.precision(12);
  os << "epoch=" << e.epoch << " train_loss=" << e.train_loss;
  if (e.test_loss) os << " test_loss=" << *e.test_loss;
  if (e.metrics)
    os << " oa=" << e.metrics->overall_accuracy << " mpa=" << e.metrics->mean_pixel_accuracy
       << " miou=" << e.metrics->mean_iou;
  return os.str();
}

// Shuffle, batch, forward, complex one-hot loss, backward, Adam; evaluates on
// the test split every eval_interval epochs. stop_early may end training
// after any epoch (it sees the freshest stats).
inline TrainResult train(Fc2mfn& model, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& test_set, const TrainConfig& cfg,
                         std::ostream* log_stream = nullptr,
                         const std::function<bool(const EpochStats&)>& stop_early = {}) {
  cfg.validate();
  if (train_set.empty()) throw ShapeError("train: empty training set");
  const int k = model.config().num_classes;
  TrainResult result;
  result.seed = cfg.seed;
  result.adam = AdamState::init_like(model.params());

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates, independent stream per epoch.
    SplitMix64 g(SplitMix64::derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = g.below(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Sample*> items;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        items.push_back(&train_set[order[i]]);
      Batch b = make_batch(items, k);
      Tape t;
      std::vector<Var> leaves = model.make_leaves(t, true);
      Var out = model.forward_with(t, leaves, t.leaf(b.master), t.leaf(b.slave),
                                   t.leaf(b.phase), /*training=*/true);
      Var loss = tape_loss(t, out, b.target);
      const double loss_value = t.value(loss).re[0];
      t.backward(loss);
      std::vector<GradPair> grads;
      grads.reserve(leaves.size());
      for (Var v : leaves) grads.push_back(t.grad(v));
      adam_step(model.params(), grads, result.adam, cfg);
      loss_sum += loss_value * static_cast<double>(items.size());
      seen += items.size();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    if (!test_set.empty() && (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs)) {
      double test_loss = 0.0;
      stats.metrics = evaluate(model, test_set, &test_loss);
      stats.test_loss = test_loss;
    }
    const std::string line = format_epoch_line(stats);
    if (log_stream) (*log_stream) << line << "\n" << std::flush;
    result.log.push_back(line);
    result.history.push_back(stats);
    if (stop_early && stop_early(result.history.back())) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Reserved entry names: "param/<path>" (model tensors incl. batch-norm
// running stats), "adam_m/<path>", "adam_v/<path>", "meta/step",
// "meta/config" (UTF-8 config text), "meta/log".

inline void save_checkpoint(const std::string& path, const Fc2mfn& model,
                            const AdamState* adam, const std::string& config_text,
                            const std::string& log_text) {
  TensorContainer c;
  const auto& specs = model.param_specs();
  for (std::size_t i = 0; i < specs.size(); ++i)
    c.put("param/" + specs[i].path, model.params()[i]);
  for (std::size_t i = 0; i < model.bn_paths().size(); ++i) {
    const auto& [bn_path, ch] = model.bn_paths()[i];
    const BatchNormState& st = model.bn_states()[i];
    CTensor mean(Shape{static_cast<std::size_t>(ch)});
    CTensor var(Shape{static_cast<std::size_t>(ch)});
    mean.re = st.mean_re;
    mean.im = st.mean_im;
    var.re = st.var_re;
    var.im = st.var_im;
    c.put("param/" + bn_path + "/running_mean", std::move(mean));
    c.put("param/" + bn_path + "/running_var", std::move(var));
  }
  if (adam) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      c.put("adam_m/" + specs[i].path, adam->m[i]);
      c.put("adam_v/" + specs[i].path, adam->v[i]);
    }
    RTensor step({1});
    step.data[0] = static_cast<double>(adam->t);
    c.put("meta/step", std::move(step));
  }
  c.put("meta/config", text_tensor(config_text));
  c.put("meta/log", text_tensor(log_text));
  write_container(path, c);
}

inline std::string checkpoint_config_text(const TensorContainer& c) {
  return tensor_text(c.real_at("meta/config"));
}

// Fills a built model's parameters and running stats from a checkpoint,
// validating shapes.
inline void load_model_state(Fc2mfn& model, const TensorContainer& c,
                             AdamState* adam = nullptr) {
  const auto& specs = model.param_specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const CTensor& t = c.complex_at("param/" + specs[i].path);
    if (t.shape != specs[i].shape)
      throw ShapeError("checkpoint: shape mismatch for " + specs[i].path + ": have " +
                       shape_str(t.shape) + ", model wants " + shape_str(specs[i].shape));
    model.params()[i] = t;
  }
  for (std::size_t i = 0; i < model.bn_paths().size(); ++i) {
    const auto& [bn_path, ch] = model.bn_paths()[i];
    const CTensor& mean = c.complex_at("param/" + bn_path + "/running_mean");
    const CTensor& var = c.complex_at("param/" + bn_path + "/running_var");
    if (mean.numel() != static_cast<std::size_t>(ch) ||
        var.numel() != static_cast<std::size_t>(ch))
      throw ShapeError("checkpoint: running-stat shape mismatch for " + bn_path);
    BatchNormState& st = model.bn_states()[i];
    st.mean_re = mean.re;
    st.mean_im = mean.im;
    st.var_re = var.re;
    st.var_im = var.im;
  }
  if (adam) {
    AdamState s = AdamState::init_like(model.params());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      s.m[i] = c.complex_at("adam_m/" + specs[i].path);
      s.v[i] = c.complex_at("adam_v/" + specs[i].path);
      if (s.m[i].shape != specs[i].shape || s.v[i].shape != specs[i].shape)
        throw ShapeError("checkpoint: Adam state shape mismatch for " + specs[i].path);
    }
    s.t = static_cast<long long>(c.real_at("meta/step").data.at(0));
    *adam = std::move(s);
  }
}

}  // namespace fc2mfn
