// fc2mfn command line: dataset generation, training, evaluation,
// prediction, gradient checking, and the model complexity report.
//
// Exit codes: 0 success, 1 check/metric or runtime failure, 2 usage error.

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fc2mfn/fc2mfn.hpp"

namespace {

using namespace fc2mfn;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

void print_config_header(const RunConfig& cfg) {
  std::istringstream is(config_text(cfg));
  for (std::string line; std::getline(is, line);) std::cout << "# " << line << "\n";
}

struct CommonOpts {
  std::string config_path;
  std::string preset;
};

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = preset_config(opts.preset);
  if (!opts.config_path.empty()) apply_config_file(cfg, opts.config_path);
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "key = value config file");
  cmd->add_option("--preset", opts.preset, "named preset: toy or paper");
}

void print_metrics(const MetricsReport& m) {
  std::cout << "OA " << m.overall_accuracy << "\n";
  std::cout << "MPA " << m.mean_pixel_accuracy << "\n";
  for (const auto& [c, v] : m.iou_per_class) std::cout << "IoU class " << c << " " << v << "\n";
  std::cout << "Mean IoU " << m.mean_iou << "\n";
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir, long long seed,
                 int count) {
  RunConfig cfg = resolve_config(common);
  if (seed >= 0) {
    cfg.gen.seed = static_cast<std::uint64_t>(seed);
    cfg.train.seed = cfg.gen.seed;
  }
  if (count > 0) cfg.gen.num_scenes = count;
  print_config_header(cfg);
  const Manifest man = generate_dataset(cfg.gen, out_dir);
  long long counts[3] = {0, 0, 0};
  long long total = 0;
  const DataSplit split = load_dataset(out_dir);
  for (const auto* set : {&split.train, &split.test}) {
    for (const Sample& s : *set) {
      for (int v : s.labels.v) ++counts[v];
      total += static_cast<long long>(s.labels.v.size());
    }
  }
  int train_n = 0;
  for (const ManifestEntry& e : man.entries) train_n += e.train ? 1 : 0;
  std::cout << "wrote " << man.entries.size() << " samples to " << out_dir << " ("
            << train_n << " train / " << man.entries.size() - train_n << " test)\n";
  std::cout << "class pixel frequencies: shadow "
            << static_cast<double>(counts[0]) / total << ", ground "
            << static_cast<double>(counts[1]) / total << ", layover "
            << static_cast<double>(counts[2]) / total << "\n";
  if (man.regenerated > 0)
    std::cout << "scenes redrawn for class balance: " << man.regenerated << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir,
              const std::string& out_path) {
  print_config_header(cfg);
  const DataSplit data = load_dataset(data_dir);
  std::cout << "loaded " << data.train.size() << " train / " << data.test.size()
            << " test samples\n";
  Fc2mfn model = Fc2mfn::build(cfg.model, cfg.train.seed);
  std::cout << "model parameters (real scalars): " << model.trainable_param_count()
            << "\n";
  const TrainResult result = train(model, data.train, data.test, cfg.train, &std::cout);
  std::string log_text;
  for (const std::string& line : result.log) log_text += line + "\n";
  save_checkpoint(out_path, model, &result.adam, config_text(cfg), log_text);
  std::cout << "checkpoint written to " << out_path << "\n";
  const MetricsReport final_metrics = evaluate(model, data.test);
  std::cout << "final test metrics:\n";
  print_metrics(final_metrics);
  return kExitOk;
}

struct LoadedCheckpoint {
  RunConfig cfg;
  Fc2mfn model;
};

LoadedCheckpoint load_checkpoint_model(const std::string& path) {
  const TensorContainer c = read_container(path);
  RunConfig cfg;
  apply_config_text(cfg, checkpoint_config_text(c));
  Fc2mfn model = Fc2mfn::build(cfg.model, cfg.train.seed);
  load_model_state(model, c);
  return LoadedCheckpoint{std::move(cfg), std::move(model)};
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& split_name) {
  LoadedCheckpoint lc = load_checkpoint_model(checkpoint);
  print_config_header(lc.cfg);
  const DataSplit data = load_dataset(data_dir);
  const std::vector<Sample>& set = split_name == "train" ? data.train : data.test;
  if (set.empty()) throw std::runtime_error("eval: split '" + split_name + "' is empty");
  const MetricsReport m = evaluate(lc.model, set);
  std::cout << "split " << split_name << ", " << set.size() << " samples\n";
  print_metrics(m);
  return kExitOk;
}

void write_ppm_colormap(const std::string& path, const LabelMap& labels) {
  // ground-truth color marks: shadow black, ground red, layover green
  static const unsigned char palette[3][3] = {{0, 0, 0}, {255, 0, 0}, {0, 255, 0}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("predict: cannot write " + path);
  f << "P6\n" << labels.w << " " << labels.h << "\n255\n";
  for (int v : labels.v) f.write(reinterpret_cast<const char*>(palette[v]), 3);
}

int cmd_predict(const std::string& checkpoint, const std::string& sample_path,
                const std::string& out_path, bool debug) {
  LoadedCheckpoint lc = load_checkpoint_model(checkpoint);
  print_config_header(lc.cfg);
  const Sample s = load_sample(sample_path);
  Tape t;
  Batch b = make_batch({&s}, lc.cfg.model.num_classes);
  Var out = lc.model.forward(t, t.leaf(b.master), t.leaf(b.slave), t.leaf(b.phase), false);
  const LabelMap pred = decode_predictions(t.value(out));
  TensorContainer c;
  c.put("pred", labels_tensor(pred));
  write_container(out_path, c);
  std::cout << "prediction written to " << out_path << "\n";
  if (debug) {
    write_ppm_colormap(out_path + ".ppm", pred);
    std::cout << "colormap written to " << out_path << ".ppm\n";
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, int seeds) {
  std::cout << "# gradient suite: step 1e-6, boundary margin 1e-4, tolerance "
            << tolerance << ", seeds " << seeds << "\n";
  bool ok = true;
  for (int s = 0; s < seeds; ++s) {
    const std::vector<CheckOutcome> results =
        run_gradient_suite(SplitMix64::derive(seed, static_cast<std::uint64_t>(s)));
    for (const CheckOutcome& r : results) {
      const bool pass = r.report.max_rel_err < tolerance;
      ok = ok && pass;
      std::cout << (pass ? "ok   " : "FAIL ") << r.name << " seed " << s
                << " max_rel_err " << r.report.max_rel_err;
      if (!pass)
        std::cout << " at param " << r.report.worst_param << " coord "
                  << r.report.worst_coord << " (analytic " << r.report.analytic
                  << ", central-diff " << r.report.central_diff << ")";
      std::cout << "\n";
    }
  }
  std::cout << (ok ? "gradient suite passed\n" : "gradient suite FAILED\n");
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_report(const CommonOpts& common) {
  RunConfig cfg = resolve_config(common);
  print_config_header(cfg);
  const ComplexityReport rep = complexity_report(cfg.model);
  std::cout << std::left << std::setw(34) << "layer" << std::setw(8) << "kind"
            << std::right << std::setw(12) << "params" << std::setw(16) << "flops"
            << "\n";
  for (const LayerCost& r : rep.rows)
    std::cout << std::left << std::setw(34) << r.name << std::setw(8) << r.kind
              << std::right << std::setw(12) << r.params << std::setw(16) << r.flops
              << "\n";
  std::cout << std::left << std::setw(34) << "TOTAL" << std::setw(8) << ""
            << std::right << std::setw(12) << rep.total_params << std::setw(16)
            << rep.total_flops << "\n";
  std::cout << "model size: " << rep.size_bytes << " bytes ("
            << static_cast<double>(rep.size_bytes) / (1024.0 * 1024.0) << " MiB)\n";
  std::cout << "accounting constants: complex conv = 4 real-correlation MAC counts"
               " x 2 FLOPs/MAC + 2 combine adds + 2 bias adds per output element;"
               " batch norm 8 FLOPs/elem; CReLU 2 FLOPs/elem;"
               " pooling 8 FLOPs per scored element (window^2 per output);"
               " unpooling 0; fusion/residual add 2 FLOPs/elem."
               " FLOPs are one forward pass at batch 1; params are real scalars"
               " (complex = 2), size = params x 8 bytes.\n";
  if (common.preset == "paper")
    std::cout << "paper-reported reference for the full-scale network:"
                 " FLOPs 1.82T, parameters 73.927M, model size 280MB"
                 " (reported values, not computed here)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fully complex-valued convolutional segmentation stack"};
  app.require_subcommand(1);

  CommonOpts gen_common;
  std::string gen_out;
  long long gen_seed = -1;
  int gen_count = 0;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic InSAR dataset");
  add_common(gen, gen_common);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--count", gen_count, "number of samples");

  CommonOpts train_common;
  std::string train_data, train_out;
  int train_epochs = -1, train_batch = -1;
  double train_lr = -1.0, train_delta = -1.0;
  long long train_seed = -1;
  CLI::App* tr = app.add_subcommand("train", "train on a generated dataset");
  add_common(tr, train_common);
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "checkpoint output path")->required();
  tr->add_option("--epochs", train_epochs, "training epochs");
  tr->add_option("--lr", train_lr, "learning rate");
  tr->add_option("--batch-size", train_batch, "batch size");
  tr->add_option("--delta", train_delta, "pooling delta");
  tr->add_option("--seed", train_seed, "training seed");

  std::string eval_ckpt, eval_data, eval_split = "test";
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--split", eval_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));

  std::string pred_ckpt, pred_sample, pred_out;
  bool pred_debug = false;
  CLI::App* pr = app.add_subcommand("predict", "predict one sample");
  pr->add_option("--checkpoint", pred_ckpt, "checkpoint path")->required();
  pr->add_option("--sample", pred_sample, "sample container path")->required();
  pr->add_option("--out", pred_out, "output container path")->required();
  pr->add_flag("--debug", pred_debug, "also write a color map (.ppm)");

  std::string gc_preset = "toy";
  long long gc_seed = 0;
  double gc_tol = 1e-5;
  int gc_seeds = 3;
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--preset", gc_preset, "toy (the only supported preset)")
      ->check(CLI::IsMember({"toy"}));
  gc->add_option("--seed", gc_seed, "base seed");
  gc->add_option("--tolerance", gc_tol, "max relative error allowed");
  gc->add_option("--seeds", gc_seeds, "number of random seeds to run");

  CommonOpts report_common;
  CLI::App* rp = app.add_subcommand("report", "parameter/FLOP/size report");
  add_common(rp, report_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_common, gen_out, gen_seed, gen_count);
    if (tr->parsed()) {
      RunConfig cfg = resolve_config(train_common);
      if (train_epochs >= 0) cfg.train.epochs = train_epochs;
      if (train_lr > 0) cfg.train.learning_rate = train_lr;
      if (train_batch > 0) cfg.train.batch_size = train_batch;
      if (train_delta > 0) cfg.model.delta = train_delta;
      if (train_seed >= 0) {
        cfg.train.seed = static_cast<std::uint64_t>(train_seed);
        cfg.gen.seed = cfg.train.seed;
      }
      return cmd_train(cfg, train_data, train_out);
    }
    if (ev->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_split);
    if (pr->parsed()) return cmd_predict(pred_ckpt, pred_sample, pred_out, pred_debug);
    if (gc->parsed())
      return cmd_gradcheck(static_cast<std::uint64_t>(gc_seed), gc_tol, gc_seeds);
    if (rp->parsed()) return cmd_report(report_common);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
