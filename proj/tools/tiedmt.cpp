// Command-line front end: toy-corpus generation, training, decoding,
// evaluation, cost-benefit tables, oracle distributions, selector training
// and selection-guided decoding, distillation, and report regeneration from
// persisted decode logs.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure (partial logs are
// flushed by the stage that was running).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tiedmt/checkpoint.hpp"
#include "tiedmt/config.hpp"
#include "tiedmt/decode.hpp"
#include "tiedmt/metrics.hpp"
#include "tiedmt/model.hpp"
#include "tiedmt/report.hpp"
#include "tiedmt/selector.hpp"
#include "tiedmt/toy.hpp"
#include "tiedmt/train.hpp"
#include "tiedmt/vocab.hpp"

namespace fs = std::filesystem;
using namespace tiedmt;

namespace {

constexpr const char* kKnownSections[] = {"model", "train", "toy", "beam",
                                          "selector"};

// A config file may carry sections for other pipeline stages; those are fine.
// A leftover key inside a section this command consumed, or in no known
// section at all, is a typo and a usage error.
void reject_stray_keys(const KeyValueConfig& cfg,
                       const std::vector<std::string>& consumed_sections) {
  for (const std::string& key : cfg.unread_keys()) {
    std::string section = key.substr(0, key.find('.'));
    bool known = false;
    for (const char* s : kKnownSections) known = known || section == s;
    bool consumed = false;
    for (const std::string& s : consumed_sections)
      consumed = consumed || section == s;
    if (!known || consumed)
      throw CLI::ValidationError("config", "unknown config key '" + key + "'");
  }
}

KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return KeyValueConfig();
  return KeyValueConfig::load(path);
}

LayerCombination parse_combo(const std::string& text) {
  int n = 0, m = 0;
  char trailing = 0;
  if (std::sscanf(text.c_str(), "%d,%d%c", &n, &m, &trailing) != 2)
    throw CLI::ValidationError("--combo", "expected the form n,m");
  return {n, m};
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string basename_of(const std::string& path) {
  return fs::path(path).filename().string();
}

// Shared flag bundle for the decoding-related commands.
struct DecodeFlags {
  std::string config_path;
  std::string mode = "greedy";
  int beam = 0;       // 0: keep the config/default value
  double alpha = -1;  // <0: keep the config/default value
};

BeamConfig resolve_beam(const KeyValueConfig& cfg, const DecodeFlags& flags) {
  BeamConfig bc = beam_config_from(cfg);
  if (flags.beam > 0) bc.beam = flags.beam;
  if (flags.alpha >= 0) bc.alpha = static_cast<Real>(flags.alpha);
  bc.validate();
  return bc;
}

// Infer the grid shape from a decode log (largest indices seen).
void infer_grid(const std::vector<DecodeRecord>& records, int& enc_layers,
                int& dec_layers) {
  if (enc_layers > 0 && dec_layers > 0) return;
  for (const DecodeRecord& r : records) {
    enc_layers = std::max(enc_layers, r.n);
    dec_layers = std::max(dec_layers, r.m);
  }
}

int run_gen_data(const std::string& config_path, uint64_t seed, bool has_seed,
                 const std::string& out) {
  KeyValueConfig cfg = load_config(config_path);
  ToyTaskSpec spec = toy_spec_from(cfg);
  if (has_seed) spec.seed = seed;
  reject_stray_keys(cfg, {"toy"});

  ToyCorpus corpus = generate_toy_corpus(spec);
  fs::create_directories(out);
  write_corpus(out + "/train.tsv", corpus.train);
  write_corpus(out + "/test.tsv", corpus.test);
  std::cout << "task " << spec.task << ": " << corpus.train.size()
            << " train / " << corpus.test.size() << " test sentences under "
            << out << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data,
              const std::string& kind, bool rs, int enc_layers, int dec_layers,
              uint64_t seed, bool has_seed, const std::string& out,
              std::string tag) {
  KeyValueConfig cfg = load_config(config_path);
  ModelConfig mcfg = model_config_from(cfg);
  TrainingConfig tcfg = training_config_from(cfg);
  reject_stray_keys(cfg, {"model", "train"});
  if (rs) mcfg.recurrent_stacking = true;
  if (enc_layers > 0) mcfg.enc_layers = enc_layers;
  if (dec_layers > 0) mcfg.dec_layers = dec_layers;
  mcfg.validate();
  if (has_seed) tcfg.seed = seed;
  if (tag.empty()) tag = kind;

  ParallelData corpus = read_corpus(data);
  TrainResult result = train(kind, corpus, tcfg, mcfg, out, tag);
  std::cout << "trained " << kind << " for " << tcfg.steps
            << " steps; final loss "
            << result.step_overall_losses.back() << "\n"
            << "final checkpoint: " << result.final_checkpoint << "\n"
            << "training log:     " << result.log_path << "\n";
  return 0;
}

int run_decode(const DecodeFlags& flags, const std::string& model,
               const std::string& input, const std::string& combo_text,
               const std::string& out) {
  KeyValueConfig cfg = load_config(flags.config_path);
  BeamConfig bc = resolve_beam(cfg, flags);
  reject_stray_keys(cfg, {"beam"});
  LayerCombination requested{0, 0};
  if (!combo_text.empty()) requested = parse_combo(combo_text);

  Parameters params = load_checkpoint(model);
  LayerCombination combo{params.config.enc_layers, params.config.dec_layers};
  if (!combo_text.empty()) combo = requested;

  ParallelData corpus = read_corpus(input);
  auto records = decode_corpus_timed(params, combo.n, combo.m, corpus.src,
                                     flags.mode, bc);
  fs::create_directories(out);
  std::string log_path = out + "/decode-" + flags.mode + "-n" +
                         std::to_string(combo.n) + "-m" +
                         std::to_string(combo.m) + ".log";
  write_decode_log(log_path, records);

  std::string hyp_path = out + "/hypotheses.txt";
  std::ofstream hyp(hyp_path, std::ios::trunc);
  int failures = 0;
  double total = 0;
  for (const DecodeRecord& r : records) {
    if (r.failed) ++failures;
    hyp << (r.failed ? std::string("") : detokenize(r.tokens)) << '\n';
    total += r.seconds;
  }
  std::cout << "decoded " << records.size() << " sentences at (" << combo.n
            << ", " << combo.m << "), " << failures << " failures, "
            << total << " s\nlog: " << log_path << "\n";
  return 0;
}

int run_evaluate(const std::string& log_path, const std::string& data,
                 const std::string& combo_text) {
  auto records = read_decode_log(log_path);
  ParallelData corpus = read_corpus(data);
  if (!combo_text.empty()) {
    LayerCombination combo = parse_combo(combo_text);
    std::vector<DecodeRecord> filtered;
    for (const DecodeRecord& r : records)
      if (r.n == combo.n && r.m == combo.m) filtered.push_back(r);
    records = std::move(filtered);
  }
  if (records.empty()) throw std::runtime_error("evaluate: no records");
  for (const DecodeRecord& r : records)
    if (r.n != records.front().n || r.m != records.front().m)
      throw std::runtime_error(
          "evaluate: log covers several combinations; pick one with --combo");

  std::vector<std::string> hyps, refs;
  Real chrf_sum = 0;
  int failures = 0;
  for (const DecodeRecord& r : records) {
    if (r.sentence_id < 0 ||
        static_cast<size_t>(r.sentence_id) >= corpus.tgt.size())
      throw std::runtime_error("evaluate: sentence id outside the corpus");
    std::string ref = detokenize(corpus.tgt[static_cast<size_t>(r.sentence_id)]);
    if (r.failed) {
      ++failures;
      chrf_sum += sentence_chrf("", ref);
      continue;
    }
    hyps.push_back(detokenize(r.tokens));
    refs.push_back(ref);
    chrf_sum += sentence_chrf(hyps.back(), ref);
  }
  Real bleu = hyps.empty() ? 0 : corpus_bleu(hyps, refs);
  std::printf("BLEU %.2f  mean chrF %.4f  sentences %zu  failures %d\n",
              static_cast<double>(bleu),
              static_cast<double>(chrf_sum / records.size()), records.size(),
              failures);
  return 0;
}

int run_cost_benefit_cmd(const DecodeFlags& flags, const std::string& model,
                         const std::string& data, bool omit_timing,
                         const std::string& out) {
  KeyValueConfig cfg = load_config(flags.config_path);
  BeamConfig bc = resolve_beam(cfg, flags);
  reject_stray_keys(cfg, {"beam"});

  Parameters params = load_checkpoint(model);
  ParallelData test = read_corpus(data);
  std::string kind = params.config.recurrent_stacking ? "tied-multi-rs"
                                                      : "tied-multi";
  std::vector<DecodeRecord> records;
  CostBenefitReport report = run_cost_benefit(params, test, flags.mode, bc,
                                              kind, basename_of(model),
                                              &records);
  fs::create_directories(out);
  write_decode_log(out + "/cost-benefit.log", records);
  write_file(out + "/cost-benefit.txt", render_text(report, omit_timing));
  write_file(out + "/cost-benefit.csv", render_csv(report, omit_timing));
  write_file(out + "/cost-benefit.json",
             json_summary(report, nullptr, cfg.values(), omit_timing));
  std::cout << render_text(report, omit_timing)
            << "wrote cost-benefit.{log,txt,csv,json} under " << out << "\n";
  return 0;
}

int run_oracle(const std::string& log_path, const std::string& data,
               int enc_layers, int dec_layers, const std::string& out) {
  auto records = read_decode_log(log_path);
  ParallelData corpus = read_corpus(data);
  infer_grid(records, enc_layers, dec_layers);
  auto grids =
      chrf_grids_from_records(records, corpus.tgt, enc_layers, dec_layers);
  OracleReport report = oracle_report(grids);

  fs::create_directories(out);
  write_grid_file(out + "/chrf-grids.tsv", grids);
  write_file(out + "/oracle.txt", render_text(report));
  write_file(out + "/oracle.csv", render_csv(report));
  std::cout << render_text(report) << "wrote chrf-grids.tsv and oracle.{txt,csv} under "
            << out << "\n";
  return 0;
}

int run_build_selector_data(const DecodeFlags& flags, const std::string& model,
                            const std::string& data, const std::string& out) {
  KeyValueConfig cfg = load_config(flags.config_path);
  BeamConfig bc = resolve_beam(cfg, flags);
  reject_stray_keys(cfg, {"beam"});

  Parameters params = load_checkpoint(model);
  ParallelData corpus = read_corpus(data);
  SelectorDataset dataset =
      build_selector_dataset(params, corpus, flags.mode, bc);
  fs::create_directories(out);
  std::string path = out + "/selector-data.tsv";
  write_selector_dataset(path, dataset);
  std::cout << "labeled " << dataset.size() << " sentences ("
            << dataset.failures << " dropped) -> " << path << "\n";
  return 0;
}

int run_train_selector(const std::string& config_path, const std::string& model,
                       const std::string& data, uint64_t seed, bool has_seed,
                       const std::string& fine_tune, bool grid,
                       const std::string& out) {
  KeyValueConfig cfg = load_config(config_path);
  SelectorConfig scfg = selector_config_from(cfg);
  reject_stray_keys(cfg, {"selector"});
  if (has_seed) scfg.seed = seed;
  if (model.empty() && fine_tune.empty())
    throw CLI::ValidationError("train-selector",
                               "provide --model or --fine-tune");

  SelectorDataset dataset = read_selector_dataset(data);
  auto train_one = [&](const SelectorConfig& candidate) {
    if (!fine_tune.empty())
      return train_selector(dataset, load_selector(fine_tune), candidate);
    return train_selector(dataset, load_checkpoint(model), candidate);
  };

  std::vector<SelectorConfig> candidates =
      grid ? selector_grid(scfg) : std::vector<SelectorConfig>{scfg};
  SelectorTrainResult result;
  size_t best = 0;
  for (size_t c = 0; c < candidates.size(); ++c) {
    SelectorTrainResult candidate_result = train_one(candidates[c]);
    const SelectorEpochStats& s = candidate_result.epochs.back();
    if (grid)
      std::printf("grid alpha %.2f beta %.2f lambda %.2f -> loss %.4f macro F "
                  "%.4f\n",
                  static_cast<double>(candidates[c].alpha),
                  static_cast<double>(candidates[c].beta),
                  static_cast<double>(candidates[c].lambda),
                  static_cast<double>(s.loss), static_cast<double>(s.macro_f));
    // Lowest final loss wins; macro F breaks ties, then enumeration order.
    bool better = c == 0 || s.loss < result.epochs.back().loss ||
                  (s.loss == result.epochs.back().loss &&
                   s.macro_f > result.epochs.back().macro_f);
    if (better) {
      result = std::move(candidate_result);
      best = c;
    }
  }
  if (grid)
    std::printf("picked alpha %.2f beta %.2f lambda %.2f\n",
                static_cast<double>(candidates[best].alpha),
                static_cast<double>(candidates[best].beta),
                static_cast<double>(candidates[best].lambda));

  fs::create_directories(out);
  std::string ckpt = out + "/selector.ckpt";
  save_selector(ckpt, result.params);
  std::ofstream log(out + "/selector-train.log", std::ios::trunc);
  log << "epoch\tloss\tmacro_p\tmacro_r\tmacro_f\n";
  for (size_t e = 0; e < result.epochs.size(); ++e) {
    const SelectorEpochStats& s = result.epochs[e];
    char line[160];
    std::snprintf(line, sizeof line, "%zu\t%.6f\t%.4f\t%.4f\t%.4f\n", e + 1,
                  static_cast<double>(s.loss),
                  static_cast<double>(s.macro_precision),
                  static_cast<double>(s.macro_recall),
                  static_cast<double>(s.macro_f));
    log << line;
  }
  const SelectorEpochStats& last = result.epochs.back();
  std::printf(
      "trained selector for %zu epochs; loss %.4f macro F %.4f\n"
      "checkpoint: %s\n",
      result.epochs.size(), static_cast<double>(last.loss),
      static_cast<double>(last.macro_f), ckpt.c_str());
  return 0;
}

int run_select_decode(const DecodeFlags& flags, const std::string& model,
                      const std::string& selector_path, const std::string& data,
                      const std::string& out) {
  KeyValueConfig cfg = load_config(flags.config_path);
  BeamConfig bc = resolve_beam(cfg, flags);
  reject_stray_keys(cfg, {"beam"});

  Parameters nmt = load_checkpoint(model);
  SelectorParameters sel = load_selector(selector_path);
  if (sel.enc_layers != nmt.config.enc_layers ||
      sel.dec_layers != nmt.config.dec_layers)
    throw std::runtime_error(
        "select-decode: selector grid does not match the translation model");

  ParallelData corpus = read_corpus(data);
  std::vector<DecodeRecord> records;
  std::vector<int64_t> chosen(
      static_cast<size_t>(sel.enc_layers) * sel.dec_layers, 0);
  for (size_t s = 0; s < corpus.src.size(); ++s) {
    std::vector<Real> probs = selector_forward(sel, corpus.src[s]);
    LayerCombination combo = select_combination(
        probs, sel.config.threshold, sel.enc_layers, sel.dec_layers);
    ++chosen[static_cast<size_t>((combo.n - 1) * sel.dec_layers +
                                 (combo.m - 1))];
    auto one = decode_corpus_timed(nmt, combo.n, combo.m, {corpus.src[s]},
                                   flags.mode, bc);
    one[0].sentence_id = static_cast<int>(s);
    records.push_back(one[0]);
  }

  std::vector<std::string> hyps, refs;
  int failures = 0;
  double total = 0, depth = 0;
  for (size_t s = 0; s < records.size(); ++s) {
    total += records[s].seconds;
    depth += records[s].m;
    if (records[s].failed) {
      ++failures;
      continue;
    }
    hyps.push_back(detokenize(records[s].tokens));
    refs.push_back(detokenize(corpus.tgt[s]));
  }
  fs::create_directories(out);
  write_decode_log(out + "/select-decode.log", records);
  Real bleu = hyps.empty() ? 0 : corpus_bleu(hyps, refs);
  std::printf(
      "selector-guided %s decode: BLEU %.2f over %zu sentences, %d failures, "
      "%.3f s, mean decoder depth %.2f\n",
      flags.mode.c_str(), static_cast<double>(bleu), records.size(), failures,
      total, depth / records.size());
  std::cout << "chosen combinations (row n, column m):\n";
  for (int n = 1; n <= sel.enc_layers; ++n) {
    for (int m = 1; m <= sel.dec_layers; ++m)
      std::printf("%8lld",
                  static_cast<long long>(chosen[static_cast<size_t>(
                      (n - 1) * sel.dec_layers + (m - 1))]));
    std::printf("\n");
  }
  return 0;
}

int run_distill(const DecodeFlags& flags, const std::string& model,
                const std::string& data, uint64_t seed, bool has_seed,
                const std::string& out) {
  KeyValueConfig cfg = load_config(flags.config_path);
  ModelConfig mcfg = model_config_from(cfg);
  TrainingConfig tcfg = training_config_from(cfg);
  BeamConfig bc = resolve_beam(cfg, flags);
  reject_stray_keys(cfg, {"model", "train", "beam"});
  if (has_seed) tcfg.seed = seed;

  Parameters parent = load_checkpoint(model);
  ToyCorpus corpus;
  corpus.train = read_corpus(data + "/train.tsv");
  corpus.test = read_corpus(data + "/test.tsv");

  DistillationReport report =
      run_distillation_pipeline(parent, corpus, tcfg, mcfg, bc, out);
  write_file(out + "/distill.txt", render_text(report));
  write_file(out + "/distill.csv", render_csv(report));
  std::cout << render_text(report) << "wrote distill.{txt,csv} under " << out
            << "\n";
  return 0;
}

int run_sizes(const std::string& config_path, int enc_layers, int dec_layers,
              bool csv) {
  KeyValueConfig cfg = load_config(config_path);
  ModelConfig mcfg = model_config_from(cfg);
  reject_stray_keys(cfg, {"model"});
  if (enc_layers > 0) mcfg.enc_layers = enc_layers;
  if (dec_layers > 0) mcfg.dec_layers = dec_layers;
  mcfg.validate();
  ModelSizeReport report = report_model_sizes(mcfg);
  std::cout << (csv ? render_csv(report) : render_text(report));
  return 0;
}

int run_report(const std::string& log_path, const std::string& data,
               int enc_layers, int dec_layers, const std::string& kind,
               bool omit_timing, const std::string& out) {
  auto records = read_decode_log(log_path);
  ParallelData corpus = read_corpus(data);
  infer_grid(records, enc_layers, dec_layers);

  CostBenefitReport report = cost_benefit_report(
      records, corpus.tgt, enc_layers, dec_layers, kind, "from-log");
  auto grids =
      chrf_grids_from_records(records, corpus.tgt, enc_layers, dec_layers);
  OracleReport oracle = oracle_report(grids);

  fs::create_directories(out);
  write_file(out + "/report.txt",
             render_text(report, omit_timing) + render_text(oracle));
  write_file(out + "/report.csv", render_csv(report, omit_timing));
  write_file(out + "/report.json",
             json_summary(report, &oracle,
                          {{"log", basename_of(log_path)},
                           {"data", basename_of(data)}},
                          omit_timing));
  std::cout << render_text(report, omit_timing) << render_text(oracle)
            << "wrote report.{txt,csv,json} under " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tied-multi sequence-to-sequence workbench"};
  app.require_subcommand(1);

  // Flag storage shared by the handlers; each subcommand binds what it needs.
  std::string config_path, data, model, selector_path, input, log_path,
      combo_text, fine_tune, out = "run", tag, kind = "tied-multi";
  uint64_t seed = 0;
  bool rs = false, omit_timing = false, csv = false, grid = false;
  int enc_layers = 0, dec_layers = 0;
  DecodeFlags dec_flags;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
  };
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", out, "output directory (default: run)");
  };
  auto add_decode_flags = [&](CLI::App* sub) {
    add_config(sub);
    sub->add_option("--mode", dec_flags.mode, "greedy|beam")
        ->check(CLI::IsMember({"greedy", "beam"}));
    sub->add_option("--beam", dec_flags.beam, "beam width");
    sub->add_option("--alpha", dec_flags.alpha, "length-penalty exponent");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a toy corpus");
  add_config(gen);
  add_out(gen);
  CLI::Option* gen_seed = gen->add_option("--seed", seed, "corpus seed");

  CLI::App* tr = app.add_subcommand("train", "train a model");
  add_config(tr);
  add_out(tr);
  tr->add_option("--data", data, "training corpus (tsv)")->required();
  tr->add_option("--kind", kind, "tied-multi|vanilla")
      ->check(CLI::IsMember({"tied-multi", "vanilla"}));
  tr->add_flag("--rs", rs, "recurrent stacking");
  tr->add_option("--enc-layers", enc_layers, "encoder depth");
  tr->add_option("--dec-layers", dec_layers, "decoder depth");
  tr->add_option("--tag", tag, "checkpoint tag (default: kind)");
  CLI::Option* tr_seed = tr->add_option("--seed", seed, "training seed");

  CLI::App* de = app.add_subcommand("decode", "decode a corpus");
  add_decode_flags(de);
  add_out(de);
  de->add_option("--model", model, "checkpoint")->required();
  de->add_option("--input", input, "corpus (tsv; sources used)")->required();
  de->add_option("--combo", combo_text, "layer combination n,m");

  CLI::App* ev = app.add_subcommand("evaluate", "score a decode log");
  ev->add_option("--log", log_path, "decode log")->required();
  ev->add_option("--data", data, "reference corpus (tsv)")->required();
  ev->add_option("--combo", combo_text, "layer combination n,m");

  CLI::App* cb = app.add_subcommand(
      "cost-benefit", "decode at every combination and tabulate");
  add_decode_flags(cb);
  add_out(cb);
  cb->add_option("--model", model, "checkpoint")->required();
  cb->add_option("--data", data, "test corpus (tsv)")->required();
  cb->add_flag("--omit-timing", omit_timing, "drop wall-clock columns");

  CLI::App* orc = app.add_subcommand(
      "oracle", "oracle label distribution from a full decode log");
  add_out(orc);
  orc->add_option("--log", log_path, "decode log")->required();
  orc->add_option("--data", data, "reference corpus (tsv)")->required();
  orc->add_option("--enc-layers", enc_layers, "grid rows (default: from log)");
  orc->add_option("--dec-layers", dec_layers,
                  "grid columns (default: from log)");

  CLI::App* bsd = app.add_subcommand("build-selector-data",
                                     "label sentences with oracle sets");
  add_decode_flags(bsd);
  add_out(bsd);
  bsd->add_option("--model", model, "checkpoint")->required();
  bsd->add_option("--data", data, "corpus (tsv)")->required();

  CLI::App* ts = app.add_subcommand("train-selector",
                                    "train the depth classifier");
  add_config(ts);
  add_out(ts);
  CLI::Option* ts_model =
      ts->add_option("--model", model, "translation checkpoint (fresh start)");
  ts->add_option("--data", data, "selector dataset (tsv)")->required();
  CLI::Option* ts_seed = ts->add_option("--seed", seed, "selector seed");
  ts->add_option("--fine-tune", fine_tune,
                 "existing selector checkpoint to continue from")
      ->excludes(ts_model);
  ts->add_flag("--grid", grid,
               "sweep the small alpha/beta/lambda grid, keep the best");

  CLI::App* sd = app.add_subcommand("select-decode",
                                    "decode at selector-chosen depths");
  add_decode_flags(sd);
  add_out(sd);
  sd->add_option("--model", model, "translation checkpoint")->required();
  sd->add_option("--selector", selector_path, "selector checkpoint")
      ->required();
  sd->add_option("--data", data, "corpus (tsv)")->required();

  CLI::App* di = app.add_subcommand("distill",
                                    "four-way distillation comparison");
  add_decode_flags(di);
  add_out(di);
  di->add_option("--model", model, "parent checkpoint")->required();
  di->add_option("--data", data, "corpus directory (train.tsv/test.tsv)")
      ->required();
  CLI::Option* di_seed = di->add_option("--seed", seed, "child training seed");

  CLI::App* sz = app.add_subcommand("sizes", "model-size table");
  add_config(sz);
  sz->add_option("--enc-layers", enc_layers, "encoder depth");
  sz->add_option("--dec-layers", dec_layers, "decoder depth");
  sz->add_flag("--csv", csv, "emit CSV instead of text");

  CLI::App* rp = app.add_subcommand(
      "report", "rebuild reports from a persisted decode log");
  add_out(rp);
  rp->add_option("--log", log_path, "decode log")->required();
  rp->add_option("--data", data, "reference corpus (tsv)")->required();
  rp->add_option("--enc-layers", enc_layers, "grid rows (default: from log)");
  rp->add_option("--dec-layers", dec_layers,
                 "grid columns (default: from log)");
  rp->add_option("--kind", kind, "model kind label");
  rp->add_flag("--omit-timing", omit_timing, "drop wall-clock columns");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return run_gen_data(config_path, seed, !gen_seed->empty(), out);
    if (tr->parsed())
      return run_train(config_path, data, kind, rs, enc_layers, dec_layers,
                       seed, !tr_seed->empty(), out, tag);
    if (de->parsed()) {
      dec_flags.config_path = config_path;
      return run_decode(dec_flags, model, input, combo_text, out);
    }
    if (ev->parsed()) return run_evaluate(log_path, data, combo_text);
    if (cb->parsed()) {
      dec_flags.config_path = config_path;
      return run_cost_benefit_cmd(dec_flags, model, data, omit_timing, out);
    }
    if (orc->parsed())
      return run_oracle(log_path, data, enc_layers, dec_layers, out);
    if (bsd->parsed()) {
      dec_flags.config_path = config_path;
      return run_build_selector_data(dec_flags, model, data, out);
    }
    if (ts->parsed())
      return run_train_selector(config_path, model, data, seed,
                                !ts_seed->empty(), fine_tune, grid, out);
    if (sd->parsed()) {
      dec_flags.config_path = config_path;
      return run_select_decode(dec_flags, model, selector_path, data, out);
    }
    if (di->parsed()) {
      dec_flags.config_path = config_path;
      return run_distill(dec_flags, model, data, seed, !di_seed->empty(), out);
    }
    if (sz->parsed()) return run_sizes(config_path, enc_layers, dec_layers, csv);
    if (rp->parsed())
      return run_report(log_path, data, enc_layers, dec_layers, kind,
                        omit_timing, out);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
