#include "tiedmt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"
#include "tiedmt/checkpoint.hpp"
#include "tiedmt/vocab.hpp"

namespace tiedmt {

namespace {

// Decode-log seconds are persisted at six decimals; aggregating values pushed
// through the same format-and-parse path keeps a report rebuilt from the
// written log identical to one built from the in-memory records.
double round_to_log_precision(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", seconds);
  return std::stod(buf);
}

std::string fixed(double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, value);
  return buf;
}

// records[(n-1)*M + (m-1)][sentence_id], validated for full coverage.
std::vector<std::vector<const DecodeRecord*>> group_records(
    const std::vector<DecodeRecord>& records, size_t sentences, int enc_layers,
    int dec_layers) {
  if (records.empty()) throw std::invalid_argument("report: no decode records");
  if (sentences == 0) throw std::invalid_argument("report: no references");
  size_t combos = static_cast<size_t>(enc_layers) * dec_layers;
  std::vector<std::vector<const DecodeRecord*>> grouped(
      combos, std::vector<const DecodeRecord*>(sentences, nullptr));
  for (const DecodeRecord& rec : records) {
    if (rec.n < 1 || rec.n > enc_layers || rec.m < 1 || rec.m > dec_layers)
      throw std::invalid_argument("report: record combination (" +
                                  std::to_string(rec.n) + ", " +
                                  std::to_string(rec.m) + ") outside the grid");
    if (rec.sentence_id < 0 ||
        static_cast<size_t>(rec.sentence_id) >= sentences)
      throw std::invalid_argument("report: sentence id " +
                                  std::to_string(rec.sentence_id) +
                                  " outside the reference corpus");
    if (rec.mode != records.front().mode)
      throw std::invalid_argument("report: decode log mixes modes");
    auto& slot = grouped[static_cast<size_t>((rec.n - 1) * dec_layers +
                                             (rec.m - 1))][rec.sentence_id];
    if (slot != nullptr)
      throw std::invalid_argument("report: duplicate record for sentence " +
                                  std::to_string(rec.sentence_id));
    slot = &rec;
  }
  for (int n = 1; n <= enc_layers; ++n)
    for (int m = 1; m <= dec_layers; ++m)
      for (size_t s = 0; s < sentences; ++s)
        if (grouped[static_cast<size_t>((n - 1) * dec_layers + (m - 1))][s] ==
            nullptr)
          throw std::invalid_argument(
              "report: combination (" + std::to_string(n) + ", " +
              std::to_string(m) + ") is missing sentence " + std::to_string(s));
  return grouped;
}

}  // namespace

void CostBenefitReport::validate() const {
  if (enc_layers < 1 || dec_layers < 1)
    throw std::invalid_argument("cost-benefit report: bad grid shape");
  if (rows.size() != static_cast<size_t>(enc_layers) * dec_layers)
    throw std::invalid_argument("cost-benefit report: expected " +
                                std::to_string(enc_layers * dec_layers) +
                                " rows, have " + std::to_string(rows.size()));
  if (sentences == 0)
    throw std::invalid_argument("cost-benefit report: no sentences");
  for (const CostBenefitRow& row : rows)
    if (!(row.total_seconds > 0))
      throw std::invalid_argument("cost-benefit report: row (" +
                                  std::to_string(row.n) + ", " +
                                  std::to_string(row.m) +
                                  ") has non-positive timing");
}

CostBenefitReport cost_benefit_report(const std::vector<DecodeRecord>& records,
                                      const std::vector<IdSeq>& refs,
                                      int enc_layers, int dec_layers,
                                      const std::string& model_kind,
                                      const std::string& checkpoint) {
  auto grouped = group_records(records, refs.size(), enc_layers, dec_layers);
  CostBenefitReport report;
  report.model_kind = model_kind;
  report.checkpoint = checkpoint;
  report.mode = records.front().mode;
  report.enc_layers = enc_layers;
  report.dec_layers = dec_layers;
  report.sentences = refs.size();
  for (int n = 1; n <= enc_layers; ++n) {
    for (int m = 1; m <= dec_layers; ++m) {
      const auto& combo =
          grouped[static_cast<size_t>((n - 1) * dec_layers + (m - 1))];
      CostBenefitRow row;
      row.n = n;
      row.m = m;
      std::vector<std::string> hyps, matched_refs;
      for (size_t s = 0; s < combo.size(); ++s) {
        row.total_seconds += round_to_log_precision(combo[s]->seconds);
        if (combo[s]->failed) {
          ++row.failures;
          continue;
        }
        hyps.push_back(detokenize(combo[s]->tokens));
        matched_refs.push_back(detokenize(refs[s]));
      }
      row.mean_seconds = row.total_seconds / static_cast<double>(combo.size());
      row.bleu = hyps.empty() ? 0 : corpus_bleu(hyps, matched_refs);
      report.rows.push_back(row);
    }
  }
  report.validate();
  return report;
}

CostBenefitReport run_cost_benefit(const Parameters& params,
                                   const ParallelData& test,
                                   const std::string& mode,
                                   const BeamConfig& beam_cfg,
                                   const std::string& model_kind,
                                   const std::string& checkpoint,
                                   std::vector<DecodeRecord>* records_out) {
  std::vector<DecodeRecord> records;
  for (int n = 1; n <= params.config.enc_layers; ++n) {
    for (int m = 1; m <= params.config.dec_layers; ++m) {
      auto combo = decode_corpus_timed(params, n, m, test.src, mode, beam_cfg);
      records.insert(records.end(), combo.begin(), combo.end());
    }
  }
  CostBenefitReport report =
      cost_benefit_report(records, test.tgt, params.config.enc_layers,
                          params.config.dec_layers, model_kind, checkpoint);
  if (records_out != nullptr) *records_out = std::move(records);
  return report;
}

std::vector<CombinationGrid> chrf_grids_from_records(
    const std::vector<DecodeRecord>& records, const std::vector<IdSeq>& refs,
    int enc_layers, int dec_layers) {
  auto grouped = group_records(records, refs.size(), enc_layers, dec_layers);
  std::vector<CombinationGrid> grids(refs.size());
  for (size_t s = 0; s < refs.size(); ++s) {
    grids[s].enc_layers = enc_layers;
    grids[s].dec_layers = dec_layers;
    grids[s].values.resize(static_cast<size_t>(enc_layers) * dec_layers);
    std::string ref = detokenize(refs[s]);
    for (int n = 1; n <= enc_layers; ++n) {
      for (int m = 1; m <= dec_layers; ++m) {
        const DecodeRecord* rec =
            grouped[static_cast<size_t>((n - 1) * dec_layers + (m - 1))][s];
        std::string hyp = rec->failed ? "" : detokenize(rec->tokens);
        grids[s].at(n, m) = sentence_chrf(hyp, ref);
      }
    }
  }
  return grids;
}

OracleReport oracle_report(const std::vector<CombinationGrid>& grids) {
  if (grids.empty())
    throw std::invalid_argument("oracle report: no sentence grids");
  OracleReport report;
  report.enc_layers = grids.front().enc_layers;
  report.dec_layers = grids.front().dec_layers;
  report.sentences = grids.size();
  size_t combos = static_cast<size_t>(report.enc_layers) * report.dec_layers;
  report.best_counts.assign(combos, 0);
  std::vector<OracleLabel> labels;
  labels.reserve(grids.size());
  for (const CombinationGrid& grid : grids) {
    if (grid.enc_layers != report.enc_layers ||
        grid.dec_layers != report.dec_layers)
      throw std::invalid_argument("oracle report: mixed grid shapes");
    labels.push_back(oracle_label_set(grid));
    for (const LayerCombination& c : labels.back().best)
      ++report.best_counts[static_cast<size_t>(
          (c.n - 1) * report.dec_layers + (c.m - 1))];
  }
  report.fastest_best_counts =
      oracle_distribution(labels, report.enc_layers, report.dec_layers);
  return report;
}

ModelSizeReport report_model_sizes(const ModelConfig& base) {
  base.validate();
  if (base.recurrent_stacking)
    throw std::invalid_argument(
        "model sizes: the standard must be the unstacked tied-multi config");
  int combos = base.enc_layers * base.dec_layers;

  int64_t vanilla_sum = 0, rs_sum = 0;
  for (int n = 1; n <= base.enc_layers; ++n) {
    for (int m = 1; m <= base.dec_layers; ++m) {
      ModelConfig sub = base;
      sub.enc_layers = n;
      sub.dec_layers = m;
      vanilla_sum += param_count(sub);
      sub.recurrent_stacking = true;
      rs_sum += param_count(sub);
    }
  }
  int64_t tied = param_count(base);
  ModelConfig rs_base = base;
  rs_base.recurrent_stacking = true;
  int64_t tied_rs = param_count(rs_base);

  // Stored state counts each parameter plus its two optimizer moment slots.
  auto row = [&](const std::string& label, int64_t learnable) {
    ModelSizeRow r;
    r.label = label;
    r.learnable = learnable;
    r.stored = 3 * learnable;
    r.ratio = static_cast<double>(learnable) / static_cast<double>(tied);
    return r;
  };
  ModelSizeReport report;
  report.rows.push_back(
      row(std::to_string(combos) + " vanilla models", vanilla_sum));
  report.rows.push_back(row("single tied-multi model", tied));
  report.rows.push_back(
      row(std::to_string(combos) + " recurrently stacked models", rs_sum));
  report.rows.push_back(row("single tied-multi rs model", tied_rs));
  return report;
}

DistilledChild train_and_score_child(const ParallelData& train_corpus,
                                     const ParallelData& test,
                                     const std::string& kind, bool distilled,
                                     const TrainingConfig& tcfg,
                                     const ModelConfig& mcfg,
                                     const BeamConfig& beam_cfg,
                                     const std::string& out_dir,
                                     const std::string& tag) {
  if (kind != "tied-multi" && kind != "tied-multi-rs")
    throw std::invalid_argument(
        "child kind must be 'tied-multi' or 'tied-multi-rs'");
  ModelConfig child_cfg = mcfg;
  child_cfg.recurrent_stacking = kind == "tied-multi-rs";

  TrainResult trained =
      train("tied-multi", train_corpus, tcfg, child_cfg, out_dir, tag);
  Parameters child = load_checkpoint(trained.final_checkpoint);

  DistilledChild result;
  result.kind = kind;
  result.distilled = distilled;
  result.checkpoint = trained.final_checkpoint;
  CostBenefitReport greedy = run_cost_benefit(child, test, "greedy", beam_cfg,
                                              kind, trained.final_checkpoint);
  result.greedy_bleu.enc_layers = child_cfg.enc_layers;
  result.greedy_bleu.dec_layers = child_cfg.dec_layers;
  for (const CostBenefitRow& row : greedy.rows)
    result.greedy_bleu.values.push_back(row.bleu);
  result.greedy_bleu_full =
      result.greedy_bleu.at(child_cfg.enc_layers, child_cfg.dec_layers);

  auto beam_records =
      decode_corpus_timed(child, child_cfg.enc_layers, child_cfg.dec_layers,
                          test.src, "beam", beam_cfg);
  std::vector<std::string> hyps, refs;
  for (size_t s = 0; s < beam_records.size(); ++s) {
    if (beam_records[s].failed) continue;
    hyps.push_back(detokenize(beam_records[s].tokens));
    refs.push_back(detokenize(test.tgt[s]));
  }
  result.beam_bleu_full = hyps.empty() ? 0 : corpus_bleu(hyps, refs);
  return result;
}

DistillationReport run_distillation_pipeline(const Parameters& parent,
                                             const ToyCorpus& corpus,
                                             const TrainingConfig& child_tcfg,
                                             const ModelConfig& child_mcfg,
                                             const BeamConfig& beam_cfg,
                                             const std::string& out_dir) {
  DistillationReport report;
  report.enc_layers = child_mcfg.enc_layers;
  report.dec_layers = child_mcfg.dec_layers;

  int failures = 0;
  ParallelData pseudo = generate_distillation_corpus(
      parent, corpus.train.src, beam_cfg, &failures);
  report.pseudo_corpus_size = pseudo.size();
  report.pseudo_failures = failures;

  for (const std::string& kind : {"tied-multi", "tied-multi-rs"}) {
    std::string stem = kind == "tied-multi" ? "tied" : "rs";
    report.children.push_back(train_and_score_child(
        corpus.train, corpus.test, kind, false, child_tcfg, child_mcfg,
        beam_cfg, out_dir, stem + "-plain"));
    report.children.push_back(train_and_score_child(
        pseudo, corpus.test, kind, true, child_tcfg, child_mcfg, beam_cfg,
        out_dir, stem + "-distilled"));
  }
  return report;
}

std::string render_text(const CostBenefitReport& report, bool omit_timing) {
  std::ostringstream out;
  out << "cost-benefit: " << report.model_kind << " checkpoint "
      << report.checkpoint << ", " << report.mode << " decode over "
      << report.sentences << " sentences\n";
  out << "  n  m      BLEU";
  if (!omit_timing) out << "      total_s       mean_s";
  out << "  failures\n";
  for (const CostBenefitRow& row : report.rows) {
    char line[160];
    if (omit_timing) {
      std::snprintf(line, sizeof line, "%3d%3d%10.2f%10d\n", row.n, row.m,
                    static_cast<double>(row.bleu), row.failures);
    } else {
      std::snprintf(line, sizeof line, "%3d%3d%10.2f%13.6f%13.6f%10d\n", row.n,
                    row.m, static_cast<double>(row.bleu), row.total_seconds,
                    row.mean_seconds, row.failures);
    }
    out << line;
  }
  return out.str();
}

std::string render_csv(const CostBenefitReport& report, bool omit_timing) {
  std::ostringstream out;
  out << (omit_timing ? "n,m,bleu,failures\n"
                      : "n,m,bleu,total_seconds,mean_seconds,failures\n");
  for (const CostBenefitRow& row : report.rows) {
    out << row.n << ',' << row.m << ','
        << fixed(static_cast<double>(row.bleu), 6);
    if (!omit_timing)
      out << ',' << fixed(row.total_seconds, 6) << ','
          << fixed(row.mean_seconds, 6);
    out << ',' << row.failures << '\n';
  }
  return out.str();
}

std::string render_text(const OracleReport& report) {
  std::ostringstream out;
  out << "oracle distribution over " << report.sentences
      << " sentences (row n, column m)\nfastest best:\n";
  auto grid = [&](const std::vector<int64_t>& counts) {
    for (int n = 1; n <= report.enc_layers; ++n) {
      for (int m = 1; m <= report.dec_layers; ++m) {
        char cell[32];
        std::snprintf(cell, sizeof cell, "%8lld",
                      static_cast<long long>(counts[static_cast<size_t>(
                          (n - 1) * report.dec_layers + (m - 1))]));
        out << cell;
      }
      out << '\n';
    }
  };
  grid(report.fastest_best_counts);
  out << "all best (ties credited to every member):\n";
  grid(report.best_counts);
  return out.str();
}

std::string render_csv(const OracleReport& report) {
  std::ostringstream out;
  out << "n,m,fastest_best,best\n";
  for (int n = 1; n <= report.enc_layers; ++n)
    for (int m = 1; m <= report.dec_layers; ++m) {
      size_t i = static_cast<size_t>((n - 1) * report.dec_layers + (m - 1));
      out << n << ',' << m << ',' << report.fastest_best_counts[i] << ','
          << report.best_counts[i] << '\n';
    }
  return out.str();
}

std::string render_text(const ModelSizeReport& report) {
  std::ostringstream out;
  out << "model sizes (stored = parameters + 2 optimizer moments)\n";
  size_t width = 0;
  for (const ModelSizeRow& row : report.rows)
    width = std::max(width, row.label.size());
  char header[160];
  std::snprintf(header, sizeof header, "%-*s%16s%16s%8s\n",
                static_cast<int>(width), "model", "learnable", "stored",
                "ratio");
  out << header;
  for (const ModelSizeRow& row : report.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-*s%16lld%16lld%8.2f\n",
                  static_cast<int>(width), row.label.c_str(),
                  static_cast<long long>(row.learnable),
                  static_cast<long long>(row.stored), row.ratio);
    out << line;
  }
  return out.str();
}

std::string render_csv(const ModelSizeReport& report) {
  std::ostringstream out;
  out << "model,learnable,stored,ratio\n";
  for (const ModelSizeRow& row : report.rows)
    out << row.label << ',' << row.learnable << ',' << row.stored << ','
        << fixed(row.ratio, 6) << '\n';
  return out.str();
}

std::string render_text(const DistillationReport& report) {
  std::ostringstream out;
  out << "distillation comparison (pseudo corpus: "
      << report.pseudo_corpus_size << " sentences, "
      << report.pseudo_failures << " failures)\n";
  for (const DistilledChild& child : report.children) {
    out << child.kind << (child.distilled ? " distilled" : " plain")
        << " — greedy BLEU grid (row n, column m):\n";
    for (int n = 1; n <= report.enc_layers; ++n) {
      for (int m = 1; m <= report.dec_layers; ++m) {
        char cell[32];
        std::snprintf(cell, sizeof cell, "%8.2f",
                      static_cast<double>(child.greedy_bleu.at(n, m)));
        out << cell;
      }
      out << '\n';
    }
    char line[160];
    std::snprintf(line, sizeof line,
                  "full depth: greedy %.2f, beam %.2f, gap %+.2f\n",
                  static_cast<double>(child.greedy_bleu_full),
                  static_cast<double>(child.beam_bleu_full),
                  static_cast<double>(child.greedy_bleu_full -
                                      child.beam_bleu_full));
    out << line;
  }
  return out.str();
}

std::string render_csv(const DistillationReport& report) {
  std::ostringstream out;
  out << "kind,distilled,n,m,greedy_bleu\n";
  for (const DistilledChild& child : report.children)
    for (int n = 1; n <= report.enc_layers; ++n)
      for (int m = 1; m <= report.dec_layers; ++m)
        out << child.kind << ',' << (child.distilled ? 1 : 0) << ',' << n
            << ',' << m << ','
            << fixed(static_cast<double>(child.greedy_bleu.at(n, m)), 6)
            << '\n';
  return out.str();
}

std::string json_summary(const CostBenefitReport& report,
                         const OracleReport* oracle,
                         const std::map<std::string, std::string>& config_echo,
                         bool omit_timing) {
  nlohmann::ordered_json doc;
  doc["config"] = nlohmann::ordered_json::object();
  for (const auto& [key, value] : config_echo) doc["config"][key] = value;

  nlohmann::ordered_json table;
  table["model_kind"] = report.model_kind;
  table["checkpoint"] = report.checkpoint;
  table["mode"] = report.mode;
  table["enc_layers"] = report.enc_layers;
  table["dec_layers"] = report.dec_layers;
  table["sentences"] = report.sentences;
  table["rows"] = nlohmann::ordered_json::array();
  for (const CostBenefitRow& row : report.rows) {
    nlohmann::ordered_json r;
    r["n"] = row.n;
    r["m"] = row.m;
    r["bleu"] = static_cast<double>(row.bleu);
    if (!omit_timing) {
      r["total_seconds"] = row.total_seconds;
      r["mean_seconds"] = row.mean_seconds;
    }
    r["failures"] = row.failures;
    table["rows"].push_back(std::move(r));
  }
  doc["cost_benefit"] = std::move(table);

  if (oracle != nullptr) {
    nlohmann::ordered_json dist;
    dist["sentences"] = oracle->sentences;
    dist["fastest_best_counts"] = oracle->fastest_best_counts;
    dist["best_counts"] = oracle->best_counts;
    doc["oracle"] = std::move(dist);
  }
  return doc.dump(2) + "\n";
}

}  // namespace tiedmt
