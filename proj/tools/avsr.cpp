// Copyright 2026 The hybrid-avsr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point: corpus generation, training, decoding, scoring
// and the SNR sweep.
//
// A corpus directory holds corpus.cfg plus train.tsv, val.tsv and test.tsv
// manifests.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "avsr/checkpoint.hpp"
#include "avsr/config.hpp"
#include "avsr/corpus.hpp"
#include "avsr/error.hpp"
#include "avsr/harness.hpp"
#include "avsr/lm_corpus.hpp"
#include "avsr/training.hpp"

namespace fs = std::filesystem;
using namespace avsr;

namespace {

constexpr int kUsageExit = 2;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CorpusConfig corpus_config(const std::string& dir) {
  return CorpusConfig::load((fs::path(dir) / "corpus.cfg").string());
}

std::vector<UtteranceRecord> split(const std::string& dir, const std::string& name) {
  if (name != "train" && name != "val" && name != "test") {
    throw UsageError("unknown split '" + name + "' (train, val or test)");
  }
  return read_manifest((fs::path(dir) / (name + ".tsv")).string());
}

double parse_snr(const std::string& text) {
  if (text == "clean" || text == "inf") return kCleanSnr;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("bad SNR '" + text + "' (a number in dB or 'clean')");
}

struct ModelFiles {
  std::string audio, visual, av, lm;
};

struct LoadedModels {
  std::optional<HybridModel> audio, visual, av;
  std::optional<LmParams> lm;

  Recognizers view() const {
    Recognizers r;
    if (audio) r.audio = &*audio;
    if (visual) r.visual = &*visual;
    if (av) r.av_early = &*av;
    if (lm) r.lm = &*lm;
    return r;
  }
};

LoadedModels load_models(const ModelFiles& files) {
  LoadedModels m;
  if (!files.audio.empty()) m.audio = load_model(files.audio);
  if (!files.visual.empty()) m.visual = load_model(files.visual);
  if (!files.av.empty()) m.av = load_model(files.av);
  if (!files.lm.empty()) m.lm = load_lm(files.lm);
  return m;
}

void add_model_options(CLI::App* cmd, ModelFiles& files) {
  cmd->add_option("--model-a", files.audio, "Audio-only checkpoint");
  cmd->add_option("--model-v", files.visual, "Visual-only checkpoint");
  cmd->add_option("--model-av", files.av, "Early-fusion checkpoint");
  cmd->add_option("--lm", files.lm, "Language-model checkpoint");
}

struct DecodeOptions {
  double ctc_weight = 0.1;
  double lm_weight = 0.4;
  double lm_weight_visual = 0.1;
  std::size_t beam = 20;
  std::string fusion = "early";
  double gamma = 0.85;
};

void add_decode_options(CLI::App* cmd, DecodeOptions& o) {
  cmd->add_option("--ctc-weight", o.ctc_weight, "CTC weight lambda at decoding")->capture_default_str();
  cmd->add_option("--lm-weight", o.lm_weight, "LM weight beta for A and AV decoding")
      ->capture_default_str();
  cmd->add_option("--lm-weight-visual", o.lm_weight_visual, "LM weight beta for V decoding")
      ->capture_default_str();
  cmd->add_option("--beam", o.beam, "Beam width")->capture_default_str();
  cmd->add_option("--fusion", o.fusion, "AV fusion: early, late or late-rescore")
      ->capture_default_str();
  cmd->add_option("--gamma", o.gamma, "Audio weight in late fusion")->capture_default_str();
}

EvalConfig eval_config(const DecodeOptions& o, bool have_lm) {
  EvalConfig c;
  const double beta = have_lm ? o.lm_weight : 0.0;
  const double beta_v = have_lm ? o.lm_weight_visual : 0.0;
  c.audio_beam = {o.ctc_weight, beta, o.beam};
  c.visual_beam = {o.ctc_weight, beta_v, o.beam};
  c.av_beam = {o.ctc_weight, beta, o.beam};
  c.fusion = {parse_fusion_mode(o.fusion), o.gamma};
  c.audio_beam.validate();
  c.visual_beam.validate();
  if (!(o.gamma >= 0.0 && o.gamma <= 1.0)) throw UsageError("--gamma must lie in [0, 1]");
  return c;
}

// "AV" resolves through --fusion; the other names are literal.
SystemKind resolve_system(const std::string& name, FusionMode fusion) {
  if (name == "AV") return fusion == FusionMode::early ? SystemKind::av_early : SystemKind::av_late;
  return parse_system_kind(name);
}

// --- subcommands ----------------------------------------------------------

int gen_corpus(const std::string& out_dir, std::size_t n_train, std::size_t n_val,
               std::size_t n_test, std::uint64_t seed, const std::string& config_path) {
  const CorpusConfig cfg = config_path.empty() ? CorpusConfig{} : CorpusConfig::load(config_path);
  const SyntheticVoice voice(cfg);
  fs::create_directories(out_dir);
  cfg.save((fs::path(out_dir) / "corpus.cfg").string());
  const std::pair<const char*, std::size_t> splits[] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  std::uint64_t tag = 1;
  for (const auto& [name, count] : splits) {
    write_manifest((fs::path(out_dir) / (std::string(name) + ".tsv")).string(),
                   generate_corpus(voice, count, derive_seed(seed, tag++), name));
  }
  std::cout << "wrote " << n_train << "/" << n_val << "/" << n_test << " utterances to " << out_dir
            << "\n";
  return 0;
}

struct TrainOptions {
  std::string corpus, system = "A", out, config, metrics;
  std::optional<double> alpha, smoothing;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::size_t hidden = 32, layers = 2;
};

int train_cmd(const TrainOptions& o) {
  const SystemKind system = parse_system_kind(o.system);
  if (system == SystemKind::av_late) {
    throw UsageError("AV-late uses separately trained A and V models");
  }
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : TrainConfig::load(o.config);
  if (o.config.empty() && system == SystemKind::av_early) cfg.label_smoothing = 0.0;
  if (o.alpha) cfg.ctc_alpha = *o.alpha;
  if (o.smoothing) cfg.label_smoothing = *o.smoothing;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  const CorpusConfig corpus = corpus_config(o.corpus);
  const SyntheticVoice voice(corpus);
  const auto train_set = load_utterances(split(o.corpus, "train"), voice);
  const auto val_set = load_utterances(split(o.corpus, "val"), voice);
  HybridModel model = make_system_model(system, corpus, derive_seed(cfg.seed, 0x6d6f64656cull),
                                        o.hidden, o.layers);
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochMetrics& m) {
    std::cout << "epoch " << m.epoch << " train_loss " << format_double(m.train_loss)
              << " val_loss " << format_double(m.val_loss) << " val_cer "
              << format_double(m.val_cer) << "\n"
              << std::flush;
  };
  const TrainResult result = train(model, system, train_set, val_set, voice, cfg, hooks);
  const CheckpointTags tags{{"system", to_string(system)}};
  save_model(o.out, model, tags);
  write_text(o.metrics.empty() ? o.out + ".metrics.csv" : o.metrics, metrics_csv(result.epochs));
  if (result.diverged) {
    std::cerr << "training diverged (" << result.message << "); saved the last good parameters\n";
    return 1;
  }
  return 0;
}

int train_lm_cmd(const std::string& corpus_dir, const std::string& out, std::size_t epochs,
                 std::uint64_t seed, const std::string& metrics) {
  const CorpusConfig corpus = corpus_config(corpus_dir);
  const Alphabet alphabet = corpus.make_alphabet();
  LmCorpusConfig ccfg;
  ccfg.seed = seed;
  const TextCorpus text = build_lm_corpus({split(corpus_dir, "train"), split(corpus_dir, "val")},
                                          alphabet, ccfg);
  LmParams lm = make_lm(alphabet, LmConfig{}, derive_seed(seed, 0x6c6dull));
  LmTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  const LmTrainResult result = train_lm(lm, text, cfg, [](const LmEpochMetrics& m) {
    std::cout << "epoch " << m.epoch << " train_loss " << format_double(m.train_loss)
              << " val_perplexity " << format_double(m.val_perplexity) << "\n"
              << std::flush;
  });
  save_lm(out, lm);
  write_text(metrics.empty() ? out + ".metrics.csv" : metrics, lm_metrics_csv(result.epochs));
  if (result.diverged) {
    std::cerr << "LM training diverged (" << result.message << "); saved the last good parameters\n";
    return 1;
  }
  return 0;
}

struct NoiseOptions {
  std::string noise = "babble";
  std::string snr = "clean";
  std::uint64_t seed = 1;
};

int decode_cmd(const std::string& corpus_dir, const std::string& split_name,
               const std::string& system_name, const ModelFiles& files, const DecodeOptions& d,
               const NoiseOptions& n, const std::string& out, const std::string& report) {
  const CorpusConfig corpus = corpus_config(corpus_dir);
  const SyntheticVoice voice(corpus);
  const EvalConfig cfg = eval_config(d, !files.lm.empty());
  const LoadedModels models = load_models(files);
  const SystemKind system = resolve_system(system_name, cfg.fusion.mode);
  const NoiseSpec noise{parse_noise_kind(n.noise), parse_snr(n.snr)};
  const NoiseBank bank(voice, n.seed);
  const auto utterances = load_utterances(split(corpus_dir, split_name), voice);
  const EvalReport r = evaluate(system, models.view(), cfg, utterances, noise, bank, n.seed);
  std::string text;
  for (const Transcript& t : r.transcripts) {
    text += format_decode_record(t.id, corpus.make_alphabet(), t.result) + "\n";
  }
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  const std::string summary = "system " + to_string(system) + " wer " + format_double(r.wer()) +
                              " cer " + format_double(r.cer()) + "\n";
  if (!report.empty()) write_text(report, summary);
  std::cerr << summary;
  return 0;
}

// Reads "id<TAB>text[<TAB>...]" lines: manifests and decode records both fit.
std::map<std::string, std::string> read_transcripts(const std::string& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(n) + ": expected id<TAB>text");
    }
    const std::size_t end = line.find('\t', tab + 1);
    out[line.substr(0, tab)] = line.substr(tab + 1, end == std::string::npos ? end : end - tab - 1);
  }
  return out;
}

int eval_cmd(const std::string& ref_path, const std::string& hyp_path) {
  const auto refs = read_transcripts(ref_path);
  const auto hyps = read_transcripts(hyp_path);
  if (refs.empty()) throw UsageError("reference file is empty");
  ErrorReport words, chars;
  for (const auto& [id, ref] : refs) {
    const auto it = hyps.find(id);
    const std::string hyp = it == hyps.end() ? std::string() : it->second;
    words += word_errors(ref, hyp);
    chars += char_errors(ref, hyp);
  }
  std::cout << "utterances " << refs.size() << "\n"
            << "wer " << format_double(words.rate()) << " (S " << words.substitutions << " D "
            << words.deletions << " I " << words.insertions << " N " << words.reference_length
            << ")\n"
            << "cer " << format_double(chars.rate()) << " (S " << chars.substitutions << " D "
            << chars.deletions << " I " << chars.insertions << " N " << chars.reference_length
            << ")\n";
  return 0;
}

int sweep_cmd(const std::string& corpus_dir, const std::string& split_name,
              const std::vector<std::string>& systems, const ModelFiles& files,
              const DecodeOptions& d, const std::vector<std::string>& noises,
              const std::vector<std::string>& snrs, std::uint64_t seed, std::size_t limit,
              const std::string& out) {
  const CorpusConfig corpus = corpus_config(corpus_dir);
  const SyntheticVoice voice(corpus);
  SweepConfig cfg;
  cfg.eval = eval_config(d, !files.lm.empty());
  const LoadedModels models = load_models(files);
  cfg.seed = seed;
  cfg.systems.clear();
  for (const std::string& s : systems) {
    const SystemKind k = resolve_system(s, cfg.eval.fusion.mode);
    if (std::find(cfg.systems.begin(), cfg.systems.end(), k) == cfg.systems.end()) {
      cfg.systems.push_back(k);
    }
  }
  cfg.kinds.clear();
  for (const std::string& n : noises) cfg.kinds.push_back(parse_noise_kind(n));
  cfg.snrs.clear();
  for (const std::string& s : snrs) cfg.snrs.push_back(parse_snr(s));
  auto records = split(corpus_dir, split_name);
  if (limit > 0 && records.size() > limit) records.resize(limit);
  const auto utterances = load_utterances(records, voice);
  const NoiseBank bank(voice, seed);
  const SweepReport report = noise_sweep(models.view(), utterances, bank, cfg);
  const std::string csv = sweep_csv(report.rows);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  std::cerr << "max SNR deviation " << format_double(report.max_snr_error_db) << " dB\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid CTC/attention audio-visual speech recognition toolkit", "avsr"};
  app.require_subcommand(1);

  std::string corpus_dir, out, config, metrics, split_name = "test", system = "A";
  std::size_t n_train = 2000, n_val = 200, n_test = 200;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen->add_option("--out-dir", out, "Corpus directory")->required();
  gen->add_option("--train", n_train, "Training utterances")->capture_default_str();
  gen->add_option("--val", n_val, "Validation utterances")->capture_default_str();
  gen->add_option("--test", n_test, "Test utterances")->capture_default_str();
  gen->add_option("--seed", seed, "Corpus seed")->capture_default_str();
  gen->add_option("--config", config, "Corpus config (key=value)");

  TrainOptions topt;
  auto* tr = app.add_subcommand("train", "Train a hybrid model");
  tr->add_option("--corpus", topt.corpus, "Corpus directory")->required();
  tr->add_option("--system", topt.system, "A, V or AV-early")->capture_default_str();
  tr->add_option("--out", topt.out, "Output checkpoint")->required();
  tr->add_option("--config", topt.config, "Training config (key=value)");
  tr->add_option("--metrics", topt.metrics, "Metrics CSV (default <out>.metrics.csv)");
  tr->add_option("--ctc-weight-train", topt.alpha, "CTC weight alpha in the training loss");
  tr->add_option("--label-smoothing", topt.smoothing, "Label smoothing epsilon");
  tr->add_option("--epochs", topt.epochs, "Epochs");
  tr->add_option("--seed", topt.seed, "Training seed");
  tr->add_option("--hidden", topt.hidden, "BLSTM width per direction")->capture_default_str();
  tr->add_option("--layers", topt.layers, "BLSTM layers per stack")->capture_default_str();

  std::size_t lm_epochs = 10;
  auto* tlm = app.add_subcommand("train-lm", "Train the character LM on corpus transcripts");
  tlm->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  tlm->add_option("--out", out, "Output checkpoint")->required();
  tlm->add_option("--epochs", lm_epochs, "Epochs")->capture_default_str();
  tlm->add_option("--seed", seed, "Seed")->capture_default_str();
  tlm->add_option("--metrics", metrics, "Metrics CSV (default <out>.metrics.csv)");

  ModelFiles files;
  DecodeOptions dopt;
  NoiseOptions nopt;
  std::string report;
  auto* dec = app.add_subcommand("decode", "Decode a corpus split");
  dec->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  dec->add_option("--split", split_name, "train, val or test")->capture_default_str();
  dec->add_option("--system", system, "A, V, AV (via --fusion), AV-early or AV-late")
      ->capture_default_str();
  add_model_options(dec, files);
  add_decode_options(dec, dopt);
  dec->add_option("--noise", nopt.noise, "Noise kind")->capture_default_str();
  dec->add_option("--snr", nopt.snr, "SNR in dB or 'clean'")->capture_default_str();
  dec->add_option("--seed", nopt.seed, "Noise seed")->capture_default_str();
  dec->add_option("--out", out, "Decode records (default stdout)");
  dec->add_option("--report", report, "Write the WER/CER summary here");

  std::string ref_path, hyp_path;
  auto* ev = app.add_subcommand("eval", "Score hypotheses against references");
  ev->add_option("--ref", ref_path, "Reference id<TAB>text file")->required();
  ev->add_option("--hyp", hyp_path, "Hypothesis id<TAB>text file")->required();

  std::vector<std::string> sweep_systems{"A", "V", "AV"};
  std::vector<std::string> noises{"white", "pink", "babble", "tonal"};
  std::vector<std::string> snrs{"-5", "0", "5", "10", "15", "20"};
  std::size_t limit = 0;
  auto* sw = app.add_subcommand("sweep", "WER/CER as a function of SNR per noise kind");
  sw->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  sw->add_option("--split", split_name, "train, val or test")->capture_default_str();
  sw->add_option("--systems", sweep_systems, "Systems (AV resolves via --fusion)")
      ->delimiter(',')
      ->capture_default_str();
  add_model_options(sw, files);
  add_decode_options(sw, dopt);
  sw->add_option("--noise", noises, "Noise kinds")->delimiter(',')->capture_default_str();
  sw->add_option("--snr", snrs, "SNRs in dB")->delimiter(',')->capture_default_str();
  sw->add_option("--seed", seed, "Noise seed")->capture_default_str();
  sw->add_option("--limit", limit, "Use at most this many utterances (0 = all)");
  sw->add_option("--out", out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageExit;
  }

  try {
    if (*gen) return gen_corpus(out, n_train, n_val, n_test, seed, config);
    if (*tr) return train_cmd(topt);
    if (*tlm) return train_lm_cmd(corpus_dir, out, lm_epochs, seed, metrics);
    if (*dec) return decode_cmd(corpus_dir, split_name, system, files, dopt, nopt, out, report);
    if (*ev) return eval_cmd(ref_path, hyp_path);
    if (*sw) {
      return sweep_cmd(corpus_dir, split_name, sweep_systems, files, dopt, noises, snrs, seed,
                       limit, out);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
