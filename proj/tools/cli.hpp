#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gbmo/gbmo.hpp"

namespace gbmo::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

inline bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// A `.bmo` path is read as a binary cache, anything else as CSV.
inline RawDataset load_dataset(const std::string& path, const std::string& labels) {
  if (ends_with(path, ".bmo")) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return load_binary_cache(in);
  }
  if (labels.empty()) throw ConfigError("--labels is required for CSV input");
  RawDataset ds = load_csv(path, LabelSpec::parse(labels));
  validate_dataset(ds);
  return ds;
}

inline std::vector<double> read_numbers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<double> out;
  std::string tok;
  char c;
  auto flush = [&] {
    if (tok.empty()) return;
    const auto v = gbmo::detail::parse_real(tok);
    if (!v || !std::isfinite(*v)) throw DataError("'" + path + "': invalid number '" + tok + "'");
    out.push_back(*v);
    tok.clear();
  };
  while (in.get(c)) {
    if (c == ',' || c == ' ' || c == '\n' || c == '\r' || c == '\t') {
      flush();
    } else {
      tok.push_back(c);
    }
  }
  flush();
  return out;
}

struct TrainFlags {
  std::string data, labels, eval_data, model, out;
  std::string loss = "mse", mode = "mo_dense";
  BoosterConfig cfg;
  bool quiet = false;
};

inline void add_config_flags(CLI::App* cmd, TrainFlags& f) {
  auto& c = f.cfg;
  cmd->add_option("--loss", f.loss, "mse or softmax")->capture_default_str();
  cmd->add_option("--mode", f.mode,
                  "mo_dense, mo_sparse, mo_restricted, mo_exact or so_baseline")
      ->capture_default_str();
  cmd->add_option("--lr", c.learning_rate, "learning rate")->capture_default_str();
  cmd->add_option("--lambda", c.lambda, "L2 regularization on leaf values")->capture_default_str();
  cmd->add_option("--depth", c.max_depth, "maximum tree depth")->capture_default_str();
  cmd->add_option("--max-leaves", c.max_leaves, "leaf budget per tree (0: 0.75 * 2^depth)")
      ->capture_default_str();
  cmd->add_option("--min-samples", c.min_samples, "minimum samples per leaf")->capture_default_str();
  cmd->add_option("--gain-threshold", c.gain_threshold, "minimum average gain to split")
      ->capture_default_str();
  cmd->add_option("--bins", c.max_bins, "maximum bins per feature")->capture_default_str();
  cmd->add_option("--topk", c.sparse_k, "columns kept per leaf in the sparse modes");
  cmd->add_option("--rounds", c.max_rounds, "maximum boosting rounds")->capture_default_str();
  cmd->add_option("--patience", c.early_stop_patience, "early stopping patience (0: off)")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
  cmd->add_option("--workers", c.workers, "worker threads")->capture_default_str();
}

inline void finish_config(TrainFlags& f) {
  f.cfg.loss = parse_loss(f.loss);
  f.cfg.mode = parse_mode(f.mode);
  if ((f.cfg.mode == BoostMode::kMoSparse || f.cfg.mode == BoostMode::kMoRestricted) &&
      f.cfg.sparse_k == 0) {
    throw ConfigError("mode " + f.mode + " requires --topk");
  }
}

inline std::string format_real(double v) { return gbmo::detail::format_real(v); }

inline void write_history(std::ostream& out, const std::vector<HistoryRecord>& history) {
  out << "round,train_loss,eval_metric,seconds\n";
  for (const auto& h : history) {
    out << h.round << ',' << format_real(h.train_loss) << ',' << format_real(h.eval_metric) << ','
        << format_real(h.seconds) << '\n';
  }
}

inline void write_predictions(std::ostream& out, const RealMatrix& pred) {
  for (std::size_t j = 0; j < pred.cols(); ++j) out << (j ? "," : "") << 'y' << j;
  out << '\n';
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    for (std::size_t j = 0; j < pred.cols(); ++j) out << (j ? "," : "") << format_real(pred(i, j));
    out << '\n';
  }
}

inline int cmd_train(TrainFlags& f, std::ostream& out, std::ostream& err) {
  finish_config(f);
  const RawDataset train_set = load_dataset(f.data, f.labels);
  std::optional<RawDataset> eval_set;
  if (!f.eval_data.empty()) eval_set = load_dataset(f.eval_data, f.labels);
  HistoryCallback log;
  if (!f.quiet) {
    log = [&err](const HistoryRecord& h) {
      err << "[" << h.round << "] train_loss=" << h.train_loss << " eval=" << h.eval_metric
          << " (" << std::fixed << std::setprecision(3) << h.seconds << "s)"
          << std::defaultfloat << '\n';
    };
  }
  const auto result = train(train_set, eval_set ? &*eval_set : nullptr, f.cfg, log);
  save_model(result.ensemble, f.model);
  const std::string history_path = f.out.empty() ? f.model + ".history.csv" : f.out;
  std::ofstream hist(history_path);
  if (!hist) throw DataError("cannot open '" + history_path + "' for writing");
  write_history(hist, result.history);
  if (result.exact_leaf_fallbacks > 0) {
    err << "warning: " << result.exact_leaf_fallbacks
        << " exact leaf solves failed; diagonal leaf values were used\n";
  }
  out << "best_round " << result.best_round << '\n';
  out << (result.monitored_eval ? "best_eval_" : "best_train_loss")
      << (result.monitored_eval ? std::string(to_string(default_metric(f.cfg.loss))) : "") << ' '
      << format_real(result.best_score) << '\n';
  out << "trees " << result.ensemble.trees.size() << '\n';
  return kOk;
}

struct PredictFlags {
  std::string model, data, out;
  bool probabilities = false;
  std::size_t workers = 1;
};

inline int cmd_predict(const PredictFlags& f, std::ostream& out) {
  const Ensemble ens = load_model(f.model);
  std::ifstream in(f.data);
  if (!in) throw DataError("cannot open '" + f.data + "'");
  RealMatrix features = parse_feature_csv(in);
  if (features.rows() == 0) features = RealMatrix(0, ens.num_features);
  const RealMatrix pred = predict_raw(ens, features, f.probabilities, f.workers);
  if (f.out.empty() || f.out == "-") {
    write_predictions(out, pred);
  } else {
    std::ofstream file(f.out);
    if (!file) throw DataError("cannot open '" + f.out + "' for writing");
    write_predictions(file, pred);
  }
  return kOk;
}

struct SynthFlags {
  std::string kind = "friedman1", out, format = "csv";
  std::int64_t n = 10000;
  std::uint64_t seed = 0;
};

inline int cmd_synth(const SynthFlags& f, std::ostream& out) {
  if (f.n <= 0) throw ConfigError("--n must be positive");
  const RawDataset ds = synth::generate(f.kind, static_cast<std::size_t>(f.n), f.seed);
  if (f.format != "csv" && f.format != "bmo") throw ConfigError("--format must be csv or bmo");
  auto emit = [&](std::ostream& o) {
    if (f.format == "csv") {
      write_csv(o, ds);
    } else {
      save_binary_cache(o, ds);
    }
  };
  if (f.out.empty() || f.out == "-") {
    emit(out);
  } else {
    std::ofstream file(f.out, std::ios::binary);
    if (!file) throw DataError("cannot open '" + f.out + "' for writing");
    emit(file);
  }
  return kOk;
}

struct BenchFlags {
  TrainFlags train;
  std::string synth_kind;
  std::int64_t n = 10000;
  std::vector<std::string> modes{"mo_dense"};
  std::int64_t rounds = 10;
  std::size_t sweep = 0;
};

inline int cmd_bench(BenchFlags& f, std::ostream& out) {
  if (f.rounds <= 0) throw ConfigError("--bench-rounds must be positive");
  f.train.cfg.loss = parse_loss(f.train.loss);
  RawDataset ds;
  if (!f.synth_kind.empty()) {
    if (f.n <= 0) throw ConfigError("--n must be positive");
    ds = synth::generate(f.synth_kind, static_cast<std::size_t>(f.n), f.train.cfg.seed);
  } else if (!f.train.data.empty()) {
    ds = load_dataset(f.train.data, f.train.labels);
  } else {
    throw ConfigError("bench needs --data or --synth");
  }
  out << "mode,outputs,rounds,workers,seconds_per_round\n";
  auto row = [&](const BenchRow& r) {
    out << to_string(r.mode) << ',' << r.num_outputs << ',' << r.rounds << ',' << r.workers << ','
        << format_real(r.seconds_per_round) << '\n';
  };
  for (const auto& mode : f.modes) {
    BoosterConfig cfg = f.train.cfg;
    cfg.mode = parse_mode(mode);
    if ((cfg.mode == BoostMode::kMoSparse || cfg.mode == BoostMode::kMoRestricted) &&
        cfg.sparse_k == 0) {
      throw ConfigError("mode " + mode + " requires --topk");
    }
    const auto rounds = static_cast<std::size_t>(f.rounds);
    if (f.sweep >= 2) {
      const auto s = bench_output_scaling(ds, cfg, rounds, f.sweep);
      row(s.base);
      row(s.scaled);
      out << "# ratio " << to_string(cfg.mode) << ' ' << s.base.num_outputs << "->"
          << s.scaled.num_outputs << ' ' << format_real(s.ratio) << '\n';
    } else {
      row(bench_rounds(ds, cfg, rounds));
    }
  }
  return kOk;
}

struct ConfidenceFlags {
  std::string a, b, direction = "greater";
};

inline int cmd_confidence(const ConfidenceFlags& f, std::ostream& out) {
  const auto dir = stats::parse_direction(f.direction);
  const auto a = read_numbers(f.a);
  const auto b = read_numbers(f.b);
  out << format_real(stats::superiority_confidence(a, b, dir)) << '\n';
  return kOk;
}

/// Replaces `--config PATH` with the file's key=value lines as `--key value`
/// flags, placed before the rest so keys given on the command line win.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  auto it = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return a == "--config" || a.starts_with("--config=");
  });
  if (it == args.end()) return args;
  std::string path;
  if (*it == "--config") {
    if (std::next(it) == args.end()) throw ConfigError("--config needs a path");
    path = *std::next(it);
    args.erase(it, it + 2);
  } else {
    path = it->substr(9);
    args.erase(it);
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.starts_with(flag + "=");
    });
  };
  // Config flags go right after the subcommand name.
  auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return !a.starts_with("-"); });
  std::vector<std::string> extra;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    auto trim = [](std::string v) {
      v.erase(0, v.find_first_not_of(" \t\r"));
      v.erase(v.find_last_not_of(" \t\r") + 1);
      return v;
    };
    const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    extra.push_back(flag);
    extra.push_back(trim(line.substr(eq + 1)));
  }
  args.insert(sub == args.end() ? sub : std::next(sub), extra.begin(), extra.end());
  return args;
}

/// Parses argv and runs one subcommand. Data goes to `out`, diagnostics to
/// `err`. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Multi-output gradient boosted decision trees"};
  app.require_subcommand(1);
  std::string config_path;  // only for --help; expand_config consumes the flag

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--data", tf.data, "training data (CSV or .bmo)")->required();
  train_cmd->add_option("--labels", tf.labels, "N trailing target columns, or class:N");
  train_cmd->add_option("--eval-data", tf.eval_data, "evaluation data for early stopping");
  train_cmd->add_option("--model", tf.model, "output model path")->required();
  train_cmd->add_option("--out", tf.out, "history output path (default <model>.history.csv)");
  train_cmd->add_flag("--quiet", tf.quiet, "no per-round log");
  add_config_flags(train_cmd, tf);
  train_cmd->add_option("--config", config_path, "key=value file; command-line flags take precedence");

  PredictFlags pf;
  auto* predict_cmd = app.add_subcommand("predict", "predict with a saved model");
  predict_cmd->add_option("--model", pf.model, "model path")->required();
  predict_cmd->add_option("--data", pf.data, "feature CSV (features only)")->required();
  predict_cmd->add_option("--out", pf.out, "prediction CSV (default stdout)");
  predict_cmd->add_flag("--probabilities", pf.probabilities, "softmax probabilities, not logits");
  predict_cmd->add_option("--workers", pf.workers, "worker threads");

  SynthFlags sf;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--kind", sf.kind, "friedman1 or random_projection")->capture_default_str();
  synth_cmd->add_option("--n", sf.n, "number of samples")->capture_default_str();
  synth_cmd->add_option("--seed", sf.seed, "random seed")->capture_default_str();
  synth_cmd->add_option("--out", sf.out, "output path (default stdout)");
  synth_cmd->add_option("--format", sf.format, "csv or bmo")->capture_default_str();

  BenchFlags bf;
  auto* bench_cmd = app.add_subcommand("bench", "time boosting rounds");
  bench_cmd->add_option("--data", bf.train.data, "dataset (CSV or .bmo)");
  bench_cmd->add_option("--labels", bf.train.labels, "label spec for CSV input");
  bench_cmd->add_option("--synth", bf.synth_kind, "generate friedman1 or random_projection instead");
  bench_cmd->add_option("--n", bf.n, "samples for --synth")->capture_default_str();
  bench_cmd->add_option("--modes", bf.modes, "modes to time")->delimiter(',');
  bench_cmd->add_option("--bench-rounds", bf.rounds, "timed rounds per mode")->capture_default_str();
  bench_cmd->add_option("--sweep-d", bf.sweep, "replicate targets by this factor and report the ratio");
  add_config_flags(bench_cmd, bf.train);
  bench_cmd->add_option("--config", config_path, "key=value file; command-line flags take precedence");

  ConfidenceFlags cf;
  auto* conf_cmd = app.add_subcommand("confidence", "confidence that A beats B over paired trials");
  conf_cmd->add_option("--a", cf.a, "per-trial metrics of A")->required();
  conf_cmd->add_option("--b", cf.b, "per-trial metrics of B")->required();
  conf_cmd->add_option("--direction", cf.direction, "greater: P(A-B>0); less: P(A-B<0)")
      ->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(tf, out, err);
    if (*predict_cmd) return cmd_predict(pf, out);
    if (*synth_cmd) return cmd_synth(sf, out);
    if (*bench_cmd) return cmd_bench(bf, out);
    if (*conf_cmd) return cmd_confidence(cf, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}

}  // namespace gbmo::cli
