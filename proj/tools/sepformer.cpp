// Command-line front end: separate, train-toy, bench, gradcheck, census.
// Exit codes: 0 success, 1 usage or config error, 2 numeric failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sepformer/baseline.hpp"
#include "sepformer/datagen.hpp"
#include "sepformer/errors.hpp"
#include "sepformer/gradsuite.hpp"
#include "sepformer/objectives.hpp"
#include "sepformer/profiler.hpp"
#include "sepformer/training.hpp"

namespace fs = std::filesystem;
using namespace sepformer;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

// Config precedence: built-in defaults, then --config, then --set, then
// command-specific flags applied by the caller.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;

  void add(CLI::App* app, const std::string& default_file = "") {
    file = default_file;
    app->add_option("--config", file, "key=value config file");
    app->add_option("--set", sets, "override one key, e.g. --set heads=4")->allow_extra_args(false);
  }

  SepformerConfig resolve() const {
    SepformerConfig cfg = file.empty() ? SepformerConfig{} : load_config(file);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set " + kv + ": expected key=value");
      if (!cfg.set(kv.substr(0, eq), kv.substr(eq + 1)))
        throw ConfigError("--set: unknown key '" + kv.substr(0, eq) + "'");
    }
    return cfg;
  }
};

NdArray to_array(const Signal& s) { return NdArray({s.size()}, s.samples); }

Signal to_signal(const NdArray& a, std::uint32_t rate) {
  Signal s;
  s.sample_rate = rate;
  s.samples.assign(a.data().begin(), a.data().end());
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path + ": cannot open for writing");
  out << text;
}

// separate ------------------------------------------------------------------

struct SeparateArgs {
  std::string model, input, out_dir;
  std::size_t sources = 0;
  std::vector<std::string> refs;
};

int run_separate(const SeparateArgs& a) {
  if (!fs::exists(a.model)) throw ConfigError(a.model + ": no such checkpoint");
  if (!fs::exists(a.input)) throw ConfigError(a.input + ": no such input file");
  const SepformerModel model = load_checkpoint(a.model);
  const SepformerConfig& cfg = model.config;
  if (a.sources != 0 && a.sources != cfg.sources)
    throw ConfigError("--sources " + std::to_string(a.sources) + " but the checkpoint separates " +
                      std::to_string(cfg.sources));
  const Signal in = wav_read(a.input);
  if (in.sample_rate != cfg.sample_rate)
    throw ConfigError(a.input + ": sample rate " + std::to_string(in.sample_rate) +
                      " Hz, model expects " + std::to_string(cfg.sample_rate) + " Hz");

  const SeparationOutput out = separate(Var(to_array(in)), model);
  fs::create_directories(a.out_dir);
  std::vector<NdArray> estimates;
  for (std::size_t k = 0; k < out.estimates.size(); ++k) {
    const fs::path path = fs::path(a.out_dir) / ("source" + std::to_string(k + 1) + ".wav");
    wav_write(path, to_signal(out.estimates[k].value(), cfg.sample_rate));
    estimates.push_back(out.estimates[k].value());
    std::cout << "wrote " << path.string() << "\n";
  }
  if (a.refs.empty()) return 0;

  if (a.refs.size() != estimates.size())
    throw ConfigError("--ref given " + std::to_string(a.refs.size()) + " times, expected " +
                      std::to_string(estimates.size()));
  std::vector<NdArray> targets;
  for (const std::string& r : a.refs) {
    const Signal t = wav_read(r);
    if (t.size() != in.size())
      throw ConfigError(r + ": " + std::to_string(t.size()) + " samples, input has " +
                        std::to_string(in.size()));
    targets.push_back(to_array(t));
  }
  const Improvement imp = improvement(estimates, targets, to_array(in));
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const std::size_t t = imp.permutation[k];
    std::printf("source%zu -> ref%zu  SI-SNR %.3f dB\n", k + 1, t + 1,
                si_snr(estimates[k].data(), targets[t].data()));
  }
  std::printf("SI-SNRi %.3f dB  SDRi %.3f dB\n", imp.si_snri, imp.sdri);
  return 0;
}

// train-toy -----------------------------------------------------------------

struct TrainArgs {
  ConfigFlags config;
  std::size_t steps = 2000;
  std::int64_t seed = -1;
  std::string out = "toy.ckpt", trace;
  double lr = 1e-3, seconds = 0.5;
  std::uint64_t data_seed = 7, mix_seed = 1;
  std::string kind = "multi-sine";
  std::size_t eval_every = 50;
};

int run_train(const TrainArgs& a) {
  SepformerConfig cfg = a.config.resolve();
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();
  ToyData data;
  data.seconds = a.seconds;
  data.kind = parse_source_kind(a.kind);
  data.synth_seed = a.data_seed;
  data.mix_seed = a.mix_seed;
  const TrainItem item = toy_item(cfg, data);

  SepformerModel model = make_model(cfg);
  TrainOptions opt;
  opt.steps = a.steps;
  opt.lr = a.lr;
  opt.eval_every = a.eval_every;
  const std::vector<TraceRow> rows = train_toy(model, [&](std::size_t) { return item; }, opt);

  save_checkpoint(a.out, model);
  const std::string trace = a.trace.empty() ? a.out + ".trace.csv" : a.trace;
  std::ofstream csv(trace, std::ios::binary);
  if (!csv) throw ConfigError(trace + ": cannot open for writing");
  write_trace_csv(csv, rows);

  const double final_si_snri = evaluate_si_snri(model, item);
  if (!std::isfinite(final_si_snri)) throw NumericError("non-finite SI-SNRi after training");
  std::printf("steps %zu  final loss %.6f  SI-SNRi %.3f dB\n", a.steps,
              rows.empty() ? std::nan("") : rows.back().loss, final_si_snri);
  std::printf("checkpoint %s  trace %s\n", a.out.c_str(), trace.c_str());
  return 0;
}

// bench ---------------------------------------------------------------------

struct BenchArgs {
  ConfigFlags config;
  std::vector<std::string> attention = {"full"};
  std::vector<std::string> chunking = {"c250"};
  std::vector<double> seconds = {1, 2, 3, 4, 5};
  std::string inter = "same";
  std::string emit = "csv";
  std::string out;
  std::size_t repeats = 5;
  bool with_baseline = false;
};

std::size_t parse_chunking(const std::string& c) {
  if (c == "none") return 0;
  if (c.size() > 1 && c[0] == 'c' && c.find_first_not_of("0123456789", 1) == std::string::npos)
    return std::stoul(c.substr(1));
  throw ConfigError("--chunking " + c + ": expected c<size> or none");
}

// Longest sequence either path will see for `samples` input samples.
std::size_t longest_sequence(const SepformerConfig& cfg, std::size_t samples) {
  if (samples < cfg.kernel) return 0;
  const ChunkGeometry g = geometry_for(cfg, (samples - cfg.kernel) / cfg.stride + 1);
  return std::max(g.chunk, active_inter_layers(cfg) ? g.n_chunks : std::size_t{0});
}

int run_bench(const BenchArgs& a) {
  const SepformerConfig base = a.config.resolve();
  std::vector<CostReport> rows;
  BenchOptions opt;
  opt.repeats = a.repeats;
  for (const std::string& variant_name : a.attention) {
    const AttentionVariant variant = parse_attention_variant(variant_name);
    for (const std::string& chunking : a.chunking) {
      SepformerConfig cfg = base;
      cfg.chunk = parse_chunking(chunking);
      cfg.intra_attention = variant;
      cfg.inter_attention = a.inter == "full" ? AttentionVariant::kFull : variant;
      cfg.validate();
      for (double s : a.seconds) {
        const auto n = static_cast<std::size_t>(std::llround(s * cfg.sample_rate));
        const std::size_t len = longest_sequence(cfg, n);
        if (variant == AttentionVariant::kLinformer && len > cfg.max_len)
          throw SequenceTooLongError("linformer/" + chunking + " at " + CLI::detail::to_string(s) +
                                     " s needs sequences of " + std::to_string(len) +
                                     " but max_len is " + std::to_string(cfg.max_len));
      }
      std::string label = variant_name + "/" + chunking;
      if (a.inter == "full" && variant != AttentionVariant::kFull && cfg.chunk != 0)
        label += "/v2";
      const SepformerModel model = make_model(cfg);
      for (CostReport& r : bench_forward(model, label, a.seconds, opt)) rows.push_back(r);
    }
  }
  if (a.with_baseline) {
    ConvBaselineConfig bc;
    bc.seed = base.seed;
    const ConvBaseline baseline(bc);
    for (CostReport& r : bench_baseline(baseline, "conv-baseline", a.seconds, base.sample_rate, opt))
      rows.push_back(r);
  }
  if (a.emit == "csv") write_text(a.out, reports_to_csv(rows));
  else if (a.emit == "markdown") write_text(a.out, reports_to_markdown(rows));
  else write_text(a.out, reports_to_json(rows));
  return 0;
}

// gradcheck -----------------------------------------------------------------

int run_gradcheck(const std::string& module) {
  bool ok = true;
  for (const GradSuiteEntry& e : gradient_suite(module)) {
    const GradcheckResult r = e.run();
    const bool pass = r.passed(kGradTolerance);
    ok = ok && pass;
    std::printf("%-10s %-34s %.3e %s\n", e.suite.c_str(), e.op.c_str(), r.max_rel_error,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-domain source separation with dual-path transformers"};
  app.require_subcommand(1);

  SeparateArgs sep;
  CLI::App* separate_cmd = app.add_subcommand("separate", "split a mixture WAV with a checkpoint");
  separate_cmd->add_option("--model", sep.model, "checkpoint path")->required();
  separate_cmd->add_option("--in", sep.input, "mixture WAV")->required();
  separate_cmd->add_option("--out-dir", sep.out_dir, "output directory")->required();
  separate_cmd->add_option("--sources", sep.sources, "expected source count");
  separate_cmd->add_option("--ref", sep.refs, "reference WAV per source, for SI-SNR")
      ->allow_extra_args(false);

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train-toy", "overfit one synthetic mixture");
  train.config.add(train_cmd);
  train_cmd->add_option("--steps", train.steps, "optimizer steps")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "model initialization seed (overrides config)");
  train_cmd->add_option("--out", train.out, "checkpoint path")->capture_default_str();
  train_cmd->add_option("--trace", train.trace, "CSV trace path (default <out>.trace.csv)");
  train_cmd->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--seconds", train.seconds, "mixture length")->capture_default_str();
  train_cmd->add_option("--source-kind", train.kind, "multi-sine|filtered-noise|chirp")
      ->capture_default_str();
  train_cmd->add_option("--data-seed", train.data_seed, "source synthesis seed")
      ->capture_default_str();
  train_cmd->add_option("--mix-seed", train.mix_seed, "mixing seed")->capture_default_str();
  train_cmd->add_option("--eval-every", train.eval_every, "steps per plateau check")
      ->capture_default_str();

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "MACs, wall time and peak bytes per config");
  bench.config.add(bench_cmd);
  bench_cmd->add_option("--attention", bench.attention, "full,longformer,linformer,reformer")
      ->delimiter(',')
      ->check(CLI::IsMember({"full", "longformer", "linformer", "reformer"}));
  bench_cmd->add_option("--chunking", bench.chunking, "c250,c1000,none")->delimiter(',');
  bench_cmd->add_option("--seconds", bench.seconds, "input durations")->delimiter(',');
  bench_cmd->add_option("--inter-attention", bench.inter, "same: variant in both paths; full: full inter")
      ->check(CLI::IsMember({"same", "full"}))
      ->capture_default_str();
  bench_cmd->add_option("--emit", bench.emit, "csv|markdown|json")
      ->check(CLI::IsMember({"csv", "markdown", "json"}))
      ->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "output file (default stdout)");
  bench_cmd->add_option("--repeats", bench.repeats, "timed repeats after warm-up")
      ->capture_default_str();
  bench_cmd->add_flag("--with-baseline", bench.with_baseline, "add the conv reference model");

  std::string module = "all";
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  grad_cmd->add_option("--module", module, "all|ndkernel|attention|model")
      ->check(CLI::IsMember({"all", "ndkernel", "attention", "model"}))
      ->capture_default_str();

  ConfigFlags census;
  CLI::App* census_cmd = app.add_subcommand("census", "learnable parameter count");
  census.add(census_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*separate_cmd) return run_separate(sep);
    if (*train_cmd) return run_train(train);
    if (*bench_cmd) return run_bench(bench);
    if (*grad_cmd) return run_gradcheck(module);
    if (*census_cmd) {
      const SepformerConfig cfg = census.resolve();
      cfg.validate();
      std::printf("%llu\n", static_cast<unsigned long long>(parameter_census(cfg)));
      return 0;
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
