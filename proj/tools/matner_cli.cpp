// Batch CLI for the material NER toolkit.
//
// Subcommands: train, eval, predict, crossval, stats, synth.
// Exit codes: 0 success, 1 usage/config error, 2 data/IO error, 3 runtime
// failure. Logs go to standard error as line-delimited key=value records;
// every report embeds the tool version and the effective configuration.
//
// Configuration precedence: explicit flags > --config file > --preset >
// built-in defaults.

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "matner/matner.hpp"

namespace {

using namespace matner;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

void log_line(const std::string& msg) { std::cerr << "event=" << msg << std::endl; }

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  int32_t max_len = 90;
  int32_t embedding_dim = 0;  // 0 -> follows max_len
  int32_t lstm_units = 200;
  double spatial_dropout = 0.2;
  double recurrent_dropout = 0.2;
  int32_t batch_size = 16;
  int32_t max_epochs = 50;
  double learning_rate = 0.001;
  double validation_split = 0.2;
  double test_fraction = 0.1;
  int32_t patience = 3;
  double min_delta = 0.0;
  bool early_stopping = true;
  bool mask_padding = false;
  double clip_norm = 5.0;
  uint64_t seed = 1;
  int32_t k_folds = 5;
  int32_t jobs = 1;
};

template <typename T>
T parse_number(const std::string& value, const std::string& key) {
  std::istringstream in(value);
  T out{};
  if (!(in >> out) || !(in >> std::ws).eof())
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: bad boolean '" + value + "' for key '" + key + "'");
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "max_len") cfg.max_len = parse_number<int32_t>(value, key);
  else if (key == "embedding_dim") cfg.embedding_dim = parse_number<int32_t>(value, key);
  else if (key == "lstm_units") cfg.lstm_units = parse_number<int32_t>(value, key);
  else if (key == "spatial_dropout") cfg.spatial_dropout = parse_number<double>(value, key);
  else if (key == "recurrent_dropout") cfg.recurrent_dropout = parse_number<double>(value, key);
  else if (key == "batch_size") cfg.batch_size = parse_number<int32_t>(value, key);
  else if (key == "max_epochs") cfg.max_epochs = parse_number<int32_t>(value, key);
  else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(value, key);
  else if (key == "validation_split") cfg.validation_split = parse_number<double>(value, key);
  else if (key == "test_fraction") cfg.test_fraction = parse_number<double>(value, key);
  else if (key == "patience") cfg.patience = parse_number<int32_t>(value, key);
  else if (key == "min_delta") cfg.min_delta = parse_number<double>(value, key);
  else if (key == "early_stopping") cfg.early_stopping = parse_bool(value, key);
  else if (key == "mask_padding") cfg.mask_padding = parse_bool(value, key);
  else if (key == "clip_norm") cfg.clip_norm = parse_number<double>(value, key);
  else if (key == "seed") cfg.seed = parse_number<uint64_t>(value, key);
  else if (key == "k_folds") cfg.k_folds = parse_number<int32_t>(value, key);
  else if (key == "jobs") cfg.jobs = parse_number<int32_t>(value, key);
  else throw ConfigError("config: unknown key '" + key + "'");
}

void apply_preset(RunConfig& cfg, const std::string& preset) {
  if (preset == "paper-algo") {
    cfg.max_len = 90;
    cfg.test_fraction = 0.1;
    cfg.batch_size = 16;
    cfg.max_epochs = 50;
    cfg.validation_split = 0.2;
    cfg.lstm_units = 200;
  } else if (preset == "paper-text") {
    cfg.max_len = 60;
    cfg.test_fraction = 0.2;
    cfg.batch_size = 16;
    cfg.max_epochs = 50;
    cfg.validation_split = 0.2;
    cfg.lstm_units = 200;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected paper-algo or paper-text)");
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file line " + std::to_string(line_no) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string render_config(const RunConfig& c, const std::string& preset, bool commented) {
  std::ostringstream out;
  const char* p = commented ? "# " : "";
  out << p << "tool = " << kToolName << " " << kToolVersion << "\n";
  if (!preset.empty()) out << p << "preset = " << preset << "\n";
  out << p << "max_len = " << c.max_len << "\n";
  out << p << "embedding_dim = " << c.embedding_dim << "\n";
  out << p << "lstm_units = " << c.lstm_units << "\n";
  out << p << "spatial_dropout = " << c.spatial_dropout << "\n";
  out << p << "recurrent_dropout = " << c.recurrent_dropout << "\n";
  out << p << "batch_size = " << c.batch_size << "\n";
  out << p << "max_epochs = " << c.max_epochs << "\n";
  out << p << "learning_rate = " << c.learning_rate << "\n";
  out << p << "validation_split = " << c.validation_split << "\n";
  out << p << "test_fraction = " << c.test_fraction << "\n";
  out << p << "patience = " << c.patience << "\n";
  out << p << "min_delta = " << c.min_delta << "\n";
  out << p << "early_stopping = " << (c.early_stopping ? "true" : "false") << "\n";
  out << p << "mask_padding = " << (c.mask_padding ? "true" : "false") << "\n";
  out << p << "clip_norm = " << c.clip_norm << "\n";
  out << p << "seed = " << c.seed << "\n";
  out << p << "k_folds = " << c.k_folds << "\n";
  out << p << "jobs = " << c.jobs << "\n";
  return out.str();
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.max_len = c.max_len;
  m.embedding_dim = c.embedding_dim;
  m.lstm_units = c.lstm_units;
  m.spatial_dropout = c.spatial_dropout;
  m.recurrent_dropout = c.recurrent_dropout;
  m.seed = c.seed;
  return m;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.batch_size = c.batch_size;
  t.max_epochs = c.max_epochs;
  t.validation_split = c.validation_split;
  t.test_fraction = c.test_fraction;
  t.patience = c.patience;
  t.min_delta = c.min_delta;
  t.early_stopping = c.early_stopping;
  t.learning_rate = c.learning_rate;
  t.mask_padding = c.mask_padding;
  t.clip_norm = c.clip_norm;
  t.seed = c.seed;
  t.k_folds = c.k_folds;
  return t;
}

// Registers the shared configuration flags on a subcommand and resolves the
// final configuration in precedence order.
struct SharedOpts {
  RunConfig flags;
  std::string preset;
  std::string config_file;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, const RunConfig&)>>> setters;

  void register_on(CLI::App* cmd) {
    auto add = [&](CLI::Option* opt, auto member) {
      setters.emplace_back(opt, [member](RunConfig& out, const RunConfig& in) { out.*member = in.*member; });
    };
    cmd->add_option("--preset", preset, "configuration preset: paper-algo or paper-text");
    cmd->add_option("--config", config_file, "flat key = value configuration file");
    add(cmd->add_option("--max-len", flags.max_len, "sequence length (pad/truncate)"), &RunConfig::max_len);
    add(cmd->add_option("--embedding-dim", flags.embedding_dim, "embedding width, 0 follows --max-len"), &RunConfig::embedding_dim);
    add(cmd->add_option("--lstm-units", flags.lstm_units, "LSTM units per direction"), &RunConfig::lstm_units);
    add(cmd->add_option("--spatial-dropout", flags.spatial_dropout, ""), &RunConfig::spatial_dropout);
    add(cmd->add_option("--recurrent-dropout", flags.recurrent_dropout, ""), &RunConfig::recurrent_dropout);
    add(cmd->add_option("--batch-size", flags.batch_size, ""), &RunConfig::batch_size);
    add(cmd->add_option("--epochs", flags.max_epochs, "maximum training epochs"), &RunConfig::max_epochs);
    add(cmd->add_option("--learning-rate", flags.learning_rate, ""), &RunConfig::learning_rate);
    add(cmd->add_option("--validation-split", flags.validation_split, ""), &RunConfig::validation_split);
    add(cmd->add_option("--test-fraction", flags.test_fraction, ""), &RunConfig::test_fraction);
    add(cmd->add_option("--patience", flags.patience, "early-stopping patience"), &RunConfig::patience);
    add(cmd->add_option("--min-delta", flags.min_delta, "early-stopping minimum improvement"), &RunConfig::min_delta);
    add(cmd->add_flag("--early-stopping,!--no-early-stopping", flags.early_stopping, ""), &RunConfig::early_stopping);
    add(cmd->add_flag("--mask-padding,!--no-mask-padding", flags.mask_padding, "exclude padded positions from the loss"), &RunConfig::mask_padding);
    add(cmd->add_option("--clip-norm", flags.clip_norm, "global gradient-norm clip, <=0 disables"), &RunConfig::clip_norm);
    add(cmd->add_option("--seed", flags.seed, ""), &RunConfig::seed);
    add(cmd->add_option("--k", flags.k_folds, "cross-validation folds"), &RunConfig::k_folds);
    add(cmd->add_option("--jobs", flags.jobs, "parallel fold workers"), &RunConfig::jobs);
  }

  RunConfig resolve() const {
    RunConfig final_cfg;
    if (!preset.empty()) apply_preset(final_cfg, preset);
    if (!config_file.empty()) apply_config_file(final_cfg, config_file);
    for (const auto& [opt, fn] : setters)
      if (opt->count() > 0) fn(final_cfg, flags);
    return final_cfg;
  }
};

// ---------------------------------------------------------------------------
// IO helpers

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  try {
    return parse_iob(in);
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  } catch (const EmptyCorpusError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw DataError("write failed for '" + path + "'");
}

void emit(const std::string& out_path, const std::string& contents) {
  if (out_path.empty() || out_path == "-")
    std::cout << contents;
  else
    write_file(out_path, contents);
}

ModelBundle<double> read_bundle(const std::string& path) {
  try {
    return load_model<double>(path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Subcommands

int run_train(const SharedOpts& shared, const std::string& corpus_path,
              const std::string& out_path) {
  const RunConfig cfg = shared.resolve();
  const Corpus full = read_corpus(corpus_path);
  log_line("train corpus=" + corpus_path + " sentences=" + std::to_string(full.size()));

  Corpus train_part = full;
  Corpus test_part;
  if (cfg.test_fraction > 0) {
    auto parts = split(full, cfg.test_fraction, cfg.seed);
    train_part = std::move(parts.first);
    test_part = std::move(parts.second);
  }

  TrainResult result;
  try {
    result = train(model_config(cfg), train_config(cfg), train_part);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  save_model(result.bundle, out_path);
  const std::string prov = render_config(cfg, shared.preset, true);
  write_file(out_path + ".history", prov + render_history(result.history));
  write_file(out_path + ".config", render_config(cfg, shared.preset, false));
  log_line("trained epochs=" + std::to_string(result.history.epochs.size()) +
           " best_epoch=" + std::to_string(result.history.best_epoch + 1) +
           " stopped_early=" + (result.history.stopped_early ? "true" : "false"));

  if (!test_part.empty()) {
    const MetricsReport report = evaluate_model(result.bundle, test_part);
    std::ostringstream msg;
    msg.setf(std::ios::fixed);
    msg.precision(4);
    msg << "test_metrics precision=" << report.precision() << " recall=" << report.recall()
        << " f1=" << report.f1() << " token_accuracy=" << report.token_accuracy_masked;
    log_line(msg.str());
  }
  log_line("saved bundle=" + out_path);
  return kExitOk;
}

int run_eval(const SharedOpts& shared, const std::string& model_path,
             const std::string& corpus_path, const std::string& match, const std::string& out_path,
             const std::string& name) {
  const RunConfig cfg = shared.resolve();
  const MatchMode mode = match == "first-token" ? MatchMode::kFirstToken : MatchMode::kStrict;
  const ModelBundle<double> bundle = read_bundle(model_path);
  const Corpus corpus = read_corpus(corpus_path);
  MetricsReport report = evaluate_model(bundle, corpus, mode, name);
  emit(out_path, render_config(cfg, shared.preset, true) + render_metrics(report));
  return kExitOk;
}

int run_predict(const std::string& model_path, const std::string& input_path,
                const std::string& out_path) {
  const ModelBundle<double> bundle = read_bundle(model_path);

  std::istream* in = &std::cin;
  std::ifstream file;
  if (!input_path.empty() && input_path != "-") {
    file.open(input_path);
    if (!file) throw DataError("cannot open input file '" + input_path + "'");
    in = &file;
  }

  std::ostringstream out;
  std::string line;
  int64_t truncated = 0;
  while (std::getline(*in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Sentence sentence;
    std::istringstream words(line);
    std::string token;
    while (words >> token) sentence.tokens.push_back(token);
    if (sentence.tokens.empty()) continue;
    const auto pairs = predict_tags(bundle.params, sentence, bundle.vocab);
    for (const auto& [tok, tag] : pairs) out << tok << '\t' << tag << '\n';
    // Tokens beyond max_len cannot be scored; emit O so the output stays
    // aligned one tag per token.
    if (pairs.size() < sentence.tokens.size()) {
      ++truncated;
      for (size_t t = pairs.size(); t < sentence.tokens.size(); ++t)
        out << sentence.tokens[t] << "\tO\n";
    }
    out << '\n';
  }
  if (truncated > 0)
    log_line("warning truncated_sentences=" + std::to_string(truncated) +
             " max_len=" + std::to_string(bundle.config.max_len));
  emit(out_path, out.str());
  return kExitOk;
}

int run_crossval(const SharedOpts& shared, const std::string& corpus_path,
                 const std::string& out_path) {
  const RunConfig cfg = shared.resolve();
  if (cfg.k_folds < 2)
    throw CLI::ValidationError("--k", "cross-validation needs k >= 2, got " +
                                          std::to_string(cfg.k_folds));
  const Corpus corpus = read_corpus(corpus_path);
  CvResult result;
  try {
    result = cross_validate(model_config(cfg), train_config(cfg), corpus, cfg.k_folds, cfg.jobs);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  std::ostringstream out;
  out << render_config(cfg, shared.preset, true);
  out.setf(std::ios::fixed);
  out.precision(6);
  out << "fold\tprecision\trecall\tf1\ttoken_accuracy\n";
  for (size_t f = 0; f < result.folds.size(); ++f) {
    const auto& r = result.folds[f];
    out << (f + 1) << '\t' << r.precision() << '\t' << r.recall() << '\t' << r.f1() << '\t'
        << r.token_accuracy_masked << '\n';
  }
  out << "mean\t" << result.mean_precision << '\t' << result.mean_recall << '\t' << result.mean_f1
      << '\t' << result.mean_token_accuracy << '\n';
  out << "stddev_f1\t" << result.std_f1 << '\n';
  emit(out_path, out.str());
  return kExitOk;
}

int run_stats(const SharedOpts& shared, const std::string& corpus_path,
              const std::string& out_path) {
  const RunConfig cfg = shared.resolve();
  const Corpus corpus = read_corpus(corpus_path);
  const DatasetStats st = dataset_stats(corpus);
  if (!st.has_document_ids) log_line("warning document_ids=missing");
  emit(out_path, render_config(cfg, shared.preset, true) + render_stats(st));
  return kExitOk;
}

int run_synth(uint64_t seed, int n, double ambiguous, const std::string& out_path) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_sentences = n;
  cfg.ambiguous_fraction = ambiguous;
  const Corpus corpus = generate_synthetic_corpus(cfg);
  emit(out_path, serialize_iob(corpus));
  log_line("synth sentences=" + std::to_string(corpus.size()) + " seed=" + std::to_string(seed));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"material named-entity recognition toolkit"};
  app.set_version_flag("--version", std::string(matner::kToolName) + " " + matner::kToolVersion);
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a tagger on an IOB corpus");
  SharedOpts train_opts;
  std::string train_corpus, train_out;
  train_cmd->add_option("--corpus", train_corpus, "IOB training corpus")->required();
  train_cmd->add_option("--out", train_out, "output bundle path")->required();
  train_opts.register_on(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a bundle against a gold IOB corpus");
  SharedOpts eval_opts;
  std::string eval_model, eval_corpus, eval_match = "strict", eval_out, eval_name = "model";
  eval_cmd->add_option("--model", eval_model, "model bundle")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "gold IOB corpus")->required();
  eval_cmd->add_option("--match", eval_match, "matching mode")
      ->check(CLI::IsMember({"strict", "first-token"}));
  eval_cmd->add_option("--out", eval_out, "report path (default stdout)");
  eval_cmd->add_option("--name", eval_name, "model identifier in the report");
  eval_opts.register_on(eval_cmd);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "tag raw tokenized text (one sentence per line)");
  std::string predict_model, predict_in, predict_out;
  predict_cmd->add_option("--model", predict_model, "model bundle")->required();
  predict_cmd->add_option("--input", predict_in, "input file (default stdin)");
  predict_cmd->add_option("--out", predict_out, "output file (default stdout)");

  // crossval
  auto* cv_cmd = app.add_subcommand("crossval", "k-fold cross-validation");
  SharedOpts cv_opts;
  std::string cv_corpus, cv_out;
  cv_cmd->add_option("--corpus", cv_corpus, "IOB corpus")->required();
  cv_cmd->add_option("--out", cv_out, "report path (default stdout)");
  cv_opts.register_on(cv_cmd);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics for an IOB corpus");
  SharedOpts stats_opts;
  std::string stats_corpus, stats_out;
  stats_cmd->add_option("--corpus", stats_corpus, "IOB corpus")->required();
  stats_cmd->add_option("--out", stats_out, "report path (default stdout)");
  stats_opts.register_on(stats_cmd);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic IOB corpus");
  uint64_t synth_seed = 1;
  int synth_n = 0;
  double synth_ambiguous = 0.0;
  std::string synth_out;
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--n", synth_n, "number of sentences")->required()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--ambiguous", synth_ambiguous,
                        "fraction of sentences using gazetteer words in O contexts")
      ->check(CLI::Range(0.0, 0.2));
  synth_cmd->add_option("--out", synth_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_opts, train_corpus, train_out);
    if (*eval_cmd)
      return run_eval(eval_opts, eval_model, eval_corpus, eval_match, eval_out, eval_name);
    if (*predict_cmd) return run_predict(predict_model, predict_in, predict_out);
    if (*cv_cmd) return run_crossval(cv_opts, cv_corpus, cv_out);
    if (*stats_cmd) return run_stats(stats_opts, stats_corpus, stats_out);
    if (*synth_cmd) return run_synth(synth_seed, synth_n, synth_ambiguous, synth_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
