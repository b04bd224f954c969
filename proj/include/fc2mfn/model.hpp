// FC2MFN assembly: master/slave encoders with per-stage fusion, a
// residual phase encoder kept at input resolution, an atrous spatial
// pyramid over the fused encoding, an index-driven decoder mirroring the
// master encoder, and a 1x1 head producing one complex channel per class.
// Also computes the itemized parameter/FLOP/size report.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fc2mfn/layers.hpp"
#include "fc2mfn/rng.hpp"

namespace fc2mfn {

struct ModelConfig {
  int image_h = 64;
  int image_w = 64;
  int base_width = 4;
  std::vector<int> stage_widths;  // empty = {b, 2b, 4b, 8b}
  int num_classes = 3;
  std::vector<int> aspp_dilations = {1, 6, 12, 18};
  int pool_window = 2;
  int pool_stride = 2;
  double delta = 1.0;
  bool include_slave = true;  // disabled only by the fusion-ablation tests

  std::vector<int> widths() const {
    if (!stage_widths.empty()) return stage_widths;
    return {base_width, 2 * base_width, 4 * base_width, 8 * base_width};
  }

  void validate() const {
    if (num_classes < 2) throw ShapeError("config: num_classes must be >= 2");
    if (image_h < 1 || image_w < 1) throw ShapeError("config: image size must be positive");
    for (int w : widths())
      if (w < 1) throw ShapeError("config: stage widths must be positive");
    if (aspp_dilations.size() != 4)
      throw ShapeError("config: exactly four atrous dilation rates expected");
    for (std::size_t i = 0; i < aspp_dilations.size(); ++i) {
      if (aspp_dilations[i] < 1) throw ShapeError("config: dilations must be positive");
      for (std::size_t j = 0; j < i; ++j)
        if (aspp_dilations[i] == aspp_dilations[j])
          throw ShapeError("config: dilations must be distinct");
    }
    if (pool_window < 1 || pool_stride < 1)
      throw ShapeError("config: pool window/stride must be >= 1");
    if (delta <= 0.0) throw ShapeError("config: delta must be positive");
  }
};

enum class ParamInit { uniform_fan_in, one, zero };

struct ParamSpec {
  std::string path;
  Shape shape;
  ParamInit init = ParamInit::uniform_fan_in;
  int fan_in = 0;  // real scalars per part feeding one output
};

struct LayerCost {
  std::string name;
  std::string kind;  // conv, bn, crelu, pool, unpool, add, concat
  long long params = 0;
  long long flops = 0;
  long long weight_params = 0;  // conv rows only, bias excluded
  int in_ch = 0, out_ch = 0;
};

// 2*(k^2 * in/groups * out) weights + 2*out bias, counted as real scalars.
inline long long conv_param_count(int in_ch, int out_ch, int k, int groups = 1) {
  return 2LL * k * k * (in_ch / groups) * out_ch + 2LL * out_ch;
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct ConvIdx {
  int w = -1, b = -1;
  int k = 1, groups = 1;
};

struct BnIdx {
  int gamma = -1, beta = -1;
  int state = -1;
};

struct CbrIdx {
  ConvIdx conv;
  BnIdx bn;
};

struct StageIdx {
  CbrIdx cbr3, pw;
};

struct ResBlock1Idx {
  CbrIdx c1, c2;
};

struct ResBlock2Idx {
  CbrIdx c1, c2;
  ConvIdx proj;
  BnIdx proj_bn;
};

struct AsppIdx {
  std::vector<std::pair<ConvIdx, ConvIdx>> branches;  // depthwise, pointwise
  ConvIdx conv1x1;
  ConvIdx merge;
};

struct ModelArch {
  ModelConfig cfg;
  std::vector<ParamSpec> specs;
  std::vector<std::pair<std::string, int>> bn_channels;  // path, channels
  std::vector<StageIdx> master, slave;
  CbrIdx phase_stem;
  ResBlock1Idx phase_res1;
  ResBlock2Idx phase_res2;
  AsppIdx aspp;
  std::vector<CbrIdx> decoder;
  ConvIdx head;
};

class ArchBuilder {
 public:
  explicit ArchBuilder(ModelArch& a) : a_(a) {}

  ConvIdx conv(const std::string& path, int in_ch, int out_ch, int k, int groups = 1) {
    ConvIdx idx;
    idx.k = k;
    idx.groups = groups;
    idx.w = add(path + "/w",
                Shape{static_cast<std::size_t>(out_ch),
                      static_cast<std::size_t>(in_ch / groups), static_cast<std::size_t>(k),
                      static_cast<std::size_t>(k)},
                ParamInit::uniform_fan_in, (in_ch / groups) * k * k);
    idx.b = add(path + "/b", Shape{static_cast<std::size_t>(out_ch)}, ParamInit::zero, 0);
    return idx;
  }

  BnIdx bn(const std::string& path, int ch) {
    BnIdx idx;
    idx.gamma = add(path + "/gamma", Shape{static_cast<std::size_t>(ch)}, ParamInit::one, 0);
    idx.beta = add(path + "/beta", Shape{static_cast<std::size_t>(ch)}, ParamInit::zero, 0);
    idx.state = static_cast<int>(a_.bn_channels.size());
    a_.bn_channels.emplace_back(path, ch);
    return idx;
  }

  CbrIdx cbr(const std::string& path, int in_ch, int out_ch, int k) {
    CbrIdx idx;
    idx.conv = conv(path + "/conv", in_ch, out_ch, k);
    idx.bn = bn(path + "/bn", out_ch);
    return idx;
  }

 private:
  int add(std::string path, Shape shape, ParamInit init, int fan_in) {
    a_.specs.push_back(ParamSpec{std::move(path), std::move(shape), init, fan_in});
    return static_cast<int>(a_.specs.size() - 1);
  }

  ModelArch& a_;
};

inline ModelArch build_arch(const ModelConfig& cfg) {
  cfg.validate();
  ModelArch a;
  a.cfg = cfg;
  ArchBuilder b(a);
  const std::vector<int> w = cfg.widths();
  const int stages = static_cast<int>(w.size());

  auto encoder = [&](const std::string& prefix) {
    std::vector<StageIdx> enc;
    int in_ch = 1;
    for (int i = 0; i < stages; ++i) {
      const std::string p = prefix + "/stage" + std::to_string(i);
      StageIdx st;
      st.cbr3 = b.cbr(p + "/cbr3", in_ch, w[i], 3);
      st.pw = b.cbr(p + "/pw", w[i], w[i], 1);
      enc.push_back(st);
      in_ch = w[i];
    }
    return enc;
  };

  a.master = encoder("master");
  if (cfg.include_slave) a.slave = encoder("slave");

  a.phase_stem = b.cbr("phase/stem", 1, w[0], 3);
  a.phase_res1.c1 = b.cbr("phase/res1/cbr_a", w[0], w[0], 3);
  a.phase_res1.c2 = b.cbr("phase/res1/cbr_b", w[0], w[0], 3);
  a.phase_res2.c1 = b.cbr("phase/res2/cbr_a", w[0], w[0], 3);
  a.phase_res2.c2 = b.cbr("phase/res2/cbr_b", w[0], w[0], 3);
  a.phase_res2.proj = b.conv("phase/res2/proj/conv", w[0], w[0], 1);
  a.phase_res2.proj_bn = b.bn("phase/res2/proj/bn", w[0]);

  const int ws = w[stages - 1];
  for (int d : cfg.aspp_dilations) {
    const std::string p = "aspp/branch_d" + std::to_string(d);
    a.aspp.branches.emplace_back(b.conv(p + "/dw", ws, ws, 3, ws),
                                 b.conv(p + "/pw", ws, ws, 1));
  }
  a.aspp.conv1x1 = b.conv("aspp/conv1x1", ws, ws, 1);
  a.aspp.merge = b.conv("aspp/merge", 5 * ws, ws, 1);

  for (int j = stages - 1; j >= 0; --j) {
    const int out_ch = j > 0 ? w[j - 1] : w[0];
    a.decoder.push_back(
        b.cbr("decoder/stage" + std::to_string(j) + "/cbr3", w[j], out_ch, 3));
  }

  a.head = b.conv("head/conv", 2 * w[0], cfg.num_classes, 1);
  return a;
}

}  // namespace detail

class Fc2mfn {
 public:
  static Fc2mfn build(const ModelConfig& cfg, std::uint64_t seed) {
    Fc2mfn m;
    m.arch_ = detail::build_arch(cfg);
    check_pool_geometry(cfg);
    m.params_.reserve(m.arch_.specs.size());
    for (const ParamSpec& spec : m.arch_.specs) {
      CTensor p(spec.shape);
      switch (spec.init) {
        case ParamInit::zero:
          break;
        case ParamInit::one:
          std::fill(p.re.begin(), p.re.end(), 1.0);
          std::fill(p.im.begin(), p.im.end(), 1.0);
          break;
        case ParamInit::uniform_fan_in: {
          // per-path stream, so identical layers init identically across
          // config variants sharing the same seed
          SplitMix64 g(SplitMix64::mix(seed ^ detail::fnv1a(spec.path)));
          const double s = std::sqrt(1.0 / spec.fan_in);
          for (double& v : p.re) v = g.uniform(-s, s);
          for (double& v : p.im) v = g.uniform(-s, s);
          break;
        }
      }
      m.params_.push_back(std::move(p));
    }
    for (const auto& [path, ch] : m.arch_.bn_channels)
      m.bn_states_.emplace_back(static_cast<std::size_t>(ch));
    return m;
  }

  const ModelConfig& config() const { return arch_.cfg; }
  const std::vector<ParamSpec>& param_specs() const { return arch_.specs; }
  std::vector<CTensor>& params() { return params_; }
  const std::vector<CTensor>& params() const { return params_; }
  std::vector<BatchNormState>& bn_states() { return bn_states_; }
  const std::vector<BatchNormState>& bn_states() const { return bn_states_; }
  const std::vector<std::pair<std::string, int>>& bn_paths() const {
    return arch_.bn_channels;
  }

  int param_index(std::string_view path) const {
    for (std::size_t i = 0; i < arch_.specs.size(); ++i)
      if (arch_.specs[i].path == path) return static_cast<int>(i);
    return -1;
  }

  std::vector<Var> make_leaves(Tape& t, bool requires_grad) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const CTensor& p : params_) vars.push_back(t.leaf(p, requires_grad));
    return vars;
  }

  Var forward(Tape& t, Var master, Var slave, Var phase, bool training,
              bool params_require_grad = false) {
    return forward_with(t, make_leaves(t, params_require_grad), master, slave, phase,
                        training);
  }

  // Forward with externally supplied parameter leaves in spec order; this is
  // the path the gradient checker drives.
  Var forward_with(Tape& t, const std::vector<Var>& pv, Var master, Var slave, Var phase,
                   bool training) {
    const ModelConfig& cfg = arch_.cfg;
    const std::vector<int> w = cfg.widths();
    const int stages = static_cast<int>(w.size());
    for (Var in : {master, slave, phase}) {
      const Shape& s = t.value(in).shape;
      if (s.size() != 4 || s[1] != 1 || s[2] != static_cast<std::size_t>(cfg.image_h) ||
          s[3] != static_cast<std::size_t>(cfg.image_w))
        throw ShapeError("forward: input " + shape_str(s) + " does not match configured " +
                         std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w) +
                         " single-channel images");
    }

    auto cbr = [&](Var x, const detail::CbrIdx& idx) {
      ConvGeom g;
      g.pad = same_pad(idx.conv.k, 1);
      CbrVars vars{pv[idx.conv.w], pv[idx.conv.b], pv[idx.bn.gamma], pv[idx.bn.beta],
                   &bn_states_[idx.bn.state]};
      return cbr_block(t, x, vars, g, training);
    };

    std::vector<PoolRecord> records(stages);
    std::vector<std::pair<int, int>> prepool(stages);

    auto enc_stage = [&](Var x, const detail::StageIdx& st, PoolRecord* rec,
                         std::pair<int, int>* size) {
      x = cbr(x, st.cbr3);
      x = cbr(x, st.pw);
      const Shape& s = t.value(x).shape;
      *size = {static_cast<int>(s[2]), static_cast<int>(s[3])};
      return complex_max_pool2d(t, x, cfg.pool_window, cfg.pool_stride, cfg.delta, rec);
    };

    Var m = master;
    Var s = slave;
    for (int i = 0; i < stages; ++i) {
      PoolRecord srec;
      std::pair<int, int> ssize;
      m = enc_stage(m, arch_.master[i], &records[i], &prepool[i]);
      if (cfg.include_slave) {
        s = enc_stage(s, arch_.slave[i], &srec, &ssize);
        m = add(t, m, s);
      }
    }

    // ASPP: four atrous separable branches and a 1x1 branch, concatenated,
    // then a 1x1 merge back to the encoder width.
    std::vector<Var> branches;
    for (std::size_t i = 0; i < arch_.aspp.branches.size(); ++i) {
      const auto& [dw, pw] = arch_.aspp.branches[i];
      branches.push_back(separable_atrous_conv(t, m, pv[dw.w], pv[dw.b], pv[pw.w],
                                               pv[pw.b], cfg.aspp_dilations[i]));
    }
    {
      ConvGeom g;
      branches.push_back(complex_conv2d(t, m, pv[arch_.aspp.conv1x1.w],
                                        pv[arch_.aspp.conv1x1.b], g));
    }
    Var x = concat_channels(t, branches);
    {
      ConvGeom g;
      x = complex_conv2d(t, x, pv[arch_.aspp.merge.w], pv[arch_.aspp.merge.b], g);
    }

    for (int j = stages - 1; j >= 0; --j) {
      x = complex_max_unpool2d(t, x, records[j], prepool[j].first, prepool[j].second);
      x = cbr(x, arch_.decoder[stages - 1 - j]);
    }

    Var p = cbr(phase, arch_.phase_stem);
    {
      ConvGeom g3;
      g3.pad = same_pad(3, 1);
      CbrVars c1{pv[arch_.phase_res1.c1.conv.w], pv[arch_.phase_res1.c1.conv.b],
                 pv[arch_.phase_res1.c1.bn.gamma], pv[arch_.phase_res1.c1.bn.beta],
                 &bn_states_[arch_.phase_res1.c1.bn.state]};
      CbrVars c2{pv[arch_.phase_res1.c2.conv.w], pv[arch_.phase_res1.c2.conv.b],
                 pv[arch_.phase_res1.c2.bn.gamma], pv[arch_.phase_res1.c2.bn.beta],
                 &bn_states_[arch_.phase_res1.c2.bn.state]};
      p = residual_block1(t, p, c1, c2, g3, training);
      CbrVars d1{pv[arch_.phase_res2.c1.conv.w], pv[arch_.phase_res2.c1.conv.b],
                 pv[arch_.phase_res2.c1.bn.gamma], pv[arch_.phase_res2.c1.bn.beta],
                 &bn_states_[arch_.phase_res2.c1.bn.state]};
      CbrVars d2{pv[arch_.phase_res2.c2.conv.w], pv[arch_.phase_res2.c2.conv.b],
                 pv[arch_.phase_res2.c2.bn.gamma], pv[arch_.phase_res2.c2.bn.beta],
                 &bn_states_[arch_.phase_res2.c2.bn.state]};
      ProjectionVars proj{pv[arch_.phase_res2.proj.w], pv[arch_.phase_res2.proj.b],
                          pv[arch_.phase_res2.proj_bn.gamma],
                          pv[arch_.phase_res2.proj_bn.beta],
                          &bn_states_[arch_.phase_res2.proj_bn.state]};
      p = residual_block2(t, p, d1, d2, proj, g3, training);
    }

    x = concat_channels(t, {x, p});
    ConvGeom g;
    return complex_conv2d(t, x, pv[arch_.head.w], pv[arch_.head.b], g);
  }

  long long trainable_param_count() const {
    long long n = 0;
    for (const ParamSpec& s : arch_.specs) n += 2LL * shape_numel(s.shape);
    return n;
  }

 private:
  static void check_pool_geometry(const ModelConfig& cfg) {
    int h = cfg.image_h, w = cfg.image_w;
    const int stages = static_cast<int>(cfg.widths().size());
    for (int i = 0; i < stages; ++i) {
      if (h < cfg.pool_window || w < cfg.pool_window ||
          (h - cfg.pool_window) % cfg.pool_stride != 0 ||
          (w - cfg.pool_window) % cfg.pool_stride != 0)
        throw ShapeError("config: image size not divisible by the pooling chain (stage " +
                         std::to_string(i) + " sees " + std::to_string(h) + "x" +
                         std::to_string(w) + ")");
      h = (h - cfg.pool_window) / cfg.pool_stride + 1;
      w = (w - cfg.pool_window) / cfg.pool_stride + 1;
    }
  }

  detail::ModelArch arch_;
  std::vector<CTensor> params_;
  std::vector<BatchNormState> bn_states_;
};

// ---------------------------------------------------------------------------
// Complexity accounting.
//
// Documented constants, all per element unless stated:
//   complex conv: 4 real-correlation MAC counts at 2 FLOPs/MAC,
//                 + 2 combine adds + 2 bias adds per output element
//   batch norm:   8 FLOPs per complex element (4 per part)
//   CReLU:        2 FLOPs per complex element
//   pooling:      8 FLOPs per scored element (window^2 scores per output)
//   unpooling:    0 (pure scatter)
//   fusion/residual add: 2 FLOPs per complex element
// FLOPs are for one forward pass at batch 1.

struct ComplexityReport {
  std::vector<LayerCost> rows;
  long long total_params = 0;
  long long total_flops = 0;
  long long size_bytes = 0;
};

namespace detail {

struct CostWalk {
  std::vector<LayerCost>& rows;

  void conv(const std::string& name, int in_ch, int out_ch, int k, int groups, int oh,
            int ow) {
    LayerCost r;
    r.name = name;
    r.kind = "conv";
    r.in_ch = in_ch;
    r.out_ch = out_ch;
    r.weight_params = 2LL * k * k * (in_ch / groups) * out_ch;
    r.params = conv_param_count(in_ch, out_ch, k, groups);
    const long long out_elems = static_cast<long long>(oh) * ow * out_ch;
    r.flops = out_elems * (8LL * k * k * (in_ch / groups) + 4LL);
    rows.push_back(std::move(r));
  }

  void bn(const std::string& name, int ch, int h, int w) {
    rows.push_back(LayerCost{name, "bn", 4LL * ch, 8LL * ch * h * w, 0, ch, ch});
  }

  void crelu(const std::string& name, int ch, int h, int w) {
    rows.push_back(LayerCost{name, "crelu", 0, 2LL * ch * h * w, 0, ch, ch});
  }

  void pool(const std::string& name, int ch, int oh, int ow, int window) {
    rows.push_back(LayerCost{name, "pool",
                             0, 8LL * ch * oh * ow * window * window, 0, ch, ch});
  }

  void unpool(const std::string& name, int ch) {
    rows.push_back(LayerCost{name, "unpool", 0, 0, 0, ch, ch});
  }

  void fuse_add(const std::string& name, int ch, int h, int w) {
    rows.push_back(LayerCost{name, "add", 0, 2LL * ch * h * w, 0, ch, ch});
  }

  void cbr(const std::string& name, int in_ch, int out_ch, int k, int h, int w) {
    conv(name + "/conv", in_ch, out_ch, k, 1, h, w);
    bn(name + "/bn", out_ch, h, w);
    crelu(name + "/crelu", out_ch, h, w);
  }
};

}  // namespace detail

inline ComplexityReport complexity_report(const ModelConfig& cfg) {
  cfg.validate();
  ComplexityReport rep;
  detail::CostWalk cw{rep.rows};
  const std::vector<int> w = cfg.widths();
  const int stages = static_cast<int>(w.size());

  auto encoder = [&](const std::string& prefix) {
    int h = cfg.image_h, iw = cfg.image_w, in_ch = 1;
    for (int i = 0; i < stages; ++i) {
      const std::string p = prefix + "/stage" + std::to_string(i);
      cw.cbr(p + "/cbr3", in_ch, w[i], 3, h, iw);
      cw.cbr(p + "/pw", w[i], w[i], 1, h, iw);
      h = (h - cfg.pool_window) / cfg.pool_stride + 1;
      iw = (iw - cfg.pool_window) / cfg.pool_stride + 1;
      cw.pool(p + "/pool", w[i], h, iw, cfg.pool_window);
      if (prefix == "master" && cfg.include_slave)
        cw.fuse_add(p + "/fuse_slave", w[i], h, iw);
      in_ch = w[i];
    }
    return std::pair<int, int>{h, iw};
  };

  const auto [eh, ew] = encoder("master");
  if (cfg.include_slave) encoder("slave");

  cw.cbr("phase/stem", 1, w[0], 3, cfg.image_h, cfg.image_w);
  for (const char* blk : {"res1", "res2"}) {
    const std::string p = std::string("phase/") + blk;
    cw.cbr(p + "/cbr_a", w[0], w[0], 3, cfg.image_h, cfg.image_w);
    cw.cbr(p + "/cbr_b", w[0], w[0], 3, cfg.image_h, cfg.image_w);
    if (p == "phase/res2") {
      cw.conv(p + "/proj/conv", w[0], w[0], 1, 1, cfg.image_h, cfg.image_w);
      cw.bn(p + "/proj/bn", w[0], cfg.image_h, cfg.image_w);
    }
    cw.fuse_add(p + "/skip_add", w[0], cfg.image_h, cfg.image_w);
    cw.crelu(p + "/crelu", w[0], cfg.image_h, cfg.image_w);
  }

  const int ws = w[stages - 1];
  for (int d : cfg.aspp_dilations) {
    const std::string p = "aspp/branch_d" + std::to_string(d);
    cw.conv(p + "/dw", ws, ws, 3, ws, eh, ew);
    cw.conv(p + "/pw", ws, ws, 1, 1, eh, ew);
  }
  cw.conv("aspp/conv1x1", ws, ws, 1, 1, eh, ew);
  cw.conv("aspp/merge", 5 * ws, ws, 1, 1, eh, ew);

  int h = eh, iw = ew;
  for (int j = stages - 1; j >= 0; --j) {
    h = (h - 1) * cfg.pool_stride + cfg.pool_window;
    iw = (iw - 1) * cfg.pool_stride + cfg.pool_window;
    const std::string p = "decoder/stage" + std::to_string(j);
    cw.unpool(p + "/unpool", w[j]);
    cw.cbr(p + "/cbr3", w[j], j > 0 ? w[j - 1] : w[0], 3, h, iw);
  }

  cw.conv("head/conv", 2 * w[0], cfg.num_classes, 1, 1, cfg.image_h, cfg.image_w);

  for (const LayerCost& r : rep.rows) {
    rep.total_params += r.params;
    rep.total_flops += r.flops;
  }
  rep.size_bytes = rep.total_params * 8;
  return rep;
}

inline long long count_params(const ModelConfig& cfg) {
  detail::ModelArch a = detail::build_arch(cfg);
  long long n = 0;
  for (const ParamSpec& s : a.specs) n += 2LL * shape_numel(s.shape);
  return n;
}

inline long long count_flops(const ModelConfig& cfg) { return complexity_report(cfg).total_flops; }

inline long long model_size_bytes(const ModelConfig& cfg) {
  return count_params(cfg) * 8;
}

}  // namespace fc2mfn
