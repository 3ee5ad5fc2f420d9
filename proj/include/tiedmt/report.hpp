#pragma once

// Experiment reports: the per-combination cost-benefit table, the oracle
// label distribution, the model-size table, and the distillation comparison.
// Decode-derived reports are pure functions of decode logs, so any report can
// be regenerated later from the persisted logs alone. Renderers emit aligned
// text and CSV; wall-clock columns can be omitted so reports from identical
// checkpoints compare byte-identically across runs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tiedmt/decode.hpp"
#include "tiedmt/metrics.hpp"
#include "tiedmt/toy.hpp"
#include "tiedmt/train.hpp"

namespace tiedmt {

// One decoding pass of the test set at a fixed layer combination.
struct CostBenefitRow {
  int n = 0, m = 0;
  Real bleu = 0;             // corpus BLEU over the successfully decoded rows
  double total_seconds = 0;  // summed per-sentence wall-clock time
  double mean_seconds = 0;   // total_seconds / sentence count
  int failures = 0;          // decodes that raised; excluded from BLEU
};

struct CostBenefitReport {
  std::string model_kind;  // e.g. "tied-multi", "tied-multi-rs", "vanilla"
  std::string checkpoint;  // checkpoint the rows were decoded from
  std::string mode;        // "greedy" or "beam"
  int enc_layers = 0, dec_layers = 0;
  size_t sentences = 0;
  std::vector<CostBenefitRow> rows;  // N*M rows, decoder index fastest

  void validate() const;  // exact row count, positive timings
};

// Builds the table from a decode log covering every combination: records are
// grouped by (n, m), each group must cover every sentence id exactly once,
// and all records must share one mode. Seconds are first rounded to the log
// format's six-decimal precision so a report rebuilt from a written log is
// identical to one built from the in-memory records. A combination whose
// decodes all failed scores BLEU 0.
CostBenefitReport cost_benefit_report(const std::vector<DecodeRecord>& records,
                                      const std::vector<IdSeq>& refs,
                                      int enc_layers, int dec_layers,
                                      const std::string& model_kind,
                                      const std::string& checkpoint);

// Decodes the test set at every layer combination and builds the table. The
// raw records are handed back through `records_out` (when non-null) so the
// caller can persist the log the report derives from.
CostBenefitReport run_cost_benefit(
    const Parameters& params, const ParallelData& test, const std::string& mode,
    const BeamConfig& beam_cfg, const std::string& model_kind,
    const std::string& checkpoint,
    std::vector<DecodeRecord>* records_out = nullptr);

// Per-sentence chrF grids scored from a full decode log (same coverage rules
// as cost_benefit_report). Failed decodes score as empty hypotheses.
std::vector<CombinationGrid> chrf_grids_from_records(
    const std::vector<DecodeRecord>& records, const std::vector<IdSeq>& refs,
    int enc_layers, int dec_layers);

// Distribution of per-sentence oracle labels over the combination grid.
struct OracleReport {
  int enc_layers = 0, dec_layers = 0;
  size_t sentences = 0;
  std::vector<int64_t> fastest_best_counts;  // one bin per combination
  std::vector<int64_t> best_counts;  // ties credit every best combination
};

OracleReport oracle_report(const std::vector<CombinationGrid>& grids);

// Model-size table: learnable scalar counts, stored counts (each parameter
// plus two optimizer moment slots), and size ratios with the deep tied-multi
// model as the standard. Rows cover the N*M separately-trained vanilla models
// summed, the single tied-multi model, the N*M recurrently-stacked models
// summed, and the single tied-multi model with recurrent stacking.
struct ModelSizeRow {
  std::string label;
  int64_t learnable = 0;
  int64_t stored = 0;
  double ratio = 0;
};

struct ModelSizeReport {
  std::vector<ModelSizeRow> rows;
};

ModelSizeReport report_model_sizes(const ModelConfig& base);

// One trained child model and its test scores.
struct DistilledChild {
  std::string kind;        // "tied-multi" or "tied-multi-rs"
  bool distilled = false;  // trained on the parent's beam outputs
  std::string checkpoint;
  CombinationGrid greedy_bleu;  // corpus BLEU per combination, greedy decode
  Real greedy_bleu_full = 0;    // greedy_bleu at full depth
  Real beam_bleu_full = 0;      // corpus BLEU at full depth, beam decode
};

// Trains one child on `train_corpus` and scores it on `test`. `tag` names the
// checkpoints and logs written under out_dir.
DistilledChild train_and_score_child(const ParallelData& train_corpus,
                                     const ParallelData& test,
                                     const std::string& kind, bool distilled,
                                     const TrainingConfig& tcfg,
                                     const ModelConfig& mcfg,
                                     const BeamConfig& beam_cfg,
                                     const std::string& out_dir,
                                     const std::string& tag);

// Four-way comparison: {tied-multi, tied-multi-rs} x {plain corpus, parent's
// beam-decoded pseudo corpus}.
struct DistillationReport {
  int enc_layers = 0, dec_layers = 0;
  size_t pseudo_corpus_size = 0;  // equals train size when nothing failed
  int pseudo_failures = 0;
  std::vector<DistilledChild> children;  // 4 entries, plain before distilled
};

DistillationReport run_distillation_pipeline(const Parameters& parent,
                                             const ToyCorpus& corpus,
                                             const TrainingConfig& child_tcfg,
                                             const ModelConfig& child_mcfg,
                                             const BeamConfig& beam_cfg,
                                             const std::string& out_dir);

// Renderers. `omit_timing` drops every wall-clock column.
std::string render_text(const CostBenefitReport& report,
                        bool omit_timing = false);
std::string render_csv(const CostBenefitReport& report,
                       bool omit_timing = false);
std::string render_text(const OracleReport& report);
std::string render_csv(const OracleReport& report);
std::string render_text(const ModelSizeReport& report);
std::string render_csv(const ModelSizeReport& report);
std::string render_text(const DistillationReport& report);
std::string render_csv(const DistillationReport& report);

// JSON run summary: the configuration echo (verbatim key/value pairs) next to
// the cost-benefit table and, when present, the oracle distribution. Key
// order is fixed so equal inputs give equal bytes.
std::string json_summary(const CostBenefitReport& report,
                         const OracleReport* oracle,
                         const std::map<std::string, std::string>& config_echo,
                         bool omit_timing = false);

}  // namespace tiedmt
