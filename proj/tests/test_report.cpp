// Report construction: cost-benefit tables as pure functions of decode logs,
// chrF grids and oracle distributions, the model-size table with its
// large-configuration anchors, the distillation pipeline structure, and the
// renderers (text, CSV, JSON).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "tiedmt/checkpoint.hpp"
#include "tiedmt/report.hpp"
#include "tiedmt/rng.hpp"
#include "tiedmt/toy.hpp"
#include "tiedmt/vocab.hpp"

namespace fs = std::filesystem;
using namespace tiedmt;

namespace {

DecodeRecord rec(int id, int n, int m, IdSeq tokens, double seconds,
                 const std::string& mode = "greedy") {
  DecodeRecord r;
  r.sentence_id = id;
  r.n = n;
  r.m = m;
  r.tokens = std::move(tokens);
  r.seconds = seconds;
  r.mode = mode;
  return r;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.d_ff = 32;
  cfg.vocab = 12;
  cfg.max_len = 16;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  REQUIRE(file);
  return std::string(std::istreambuf_iterator<char>(file), {});
}

}  // namespace

TEST_CASE("cost-benefit table aggregates a decode log per combination") {
  // 1x2 grid over three sentences; ids 4.. are symbols a, b, c, d, e.
  std::vector<IdSeq> refs = {{4, 5, 6}, {7, 8}, {4, 4}};
  std::vector<DecodeRecord> records = {
      rec(0, 1, 1, {4, 5, 6, 2}, 0.01), rec(1, 1, 1, {7, 2}, 0.02),
      rec(2, 1, 1, {4, 4, 2}, 0.03),    rec(0, 1, 2, {4, 5, 6, 2}, 0.04),
      rec(1, 1, 2, {7, 8, 2}, 0.05),    rec(2, 1, 2, {4, 4, 2}, 0.06),
  };

  CostBenefitReport report =
      cost_benefit_report(records, refs, 1, 2, "tied-multi", "ckpt.tmck");
  REQUIRE(report.rows.size() == 2);
  CHECK(report.mode == "greedy");
  CHECK(report.sentences == 3);

  // BLEU per row equals scoring the same strings directly.
  CHECK(report.rows[0].bleu ==
        corpus_bleu({"a b c", "d", "a a"}, {"a b c", "d e", "a a"}));
  CHECK(report.rows[1].bleu ==
        corpus_bleu({"a b c", "d e", "a a"}, {"a b c", "d e", "a a"}));
  CHECK(report.rows[1].bleu == doctest::Approx(100.0));

  CHECK(report.rows[0].total_seconds == doctest::Approx(0.06).epsilon(1e-9));
  CHECK(report.rows[1].total_seconds == doctest::Approx(0.15).epsilon(1e-9));
  CHECK(report.rows[0].mean_seconds ==
        doctest::Approx(0.02).epsilon(1e-9));
  CHECK(report.rows[0].failures == 0);

  SUBCASE("failed decodes are counted and excluded from BLEU") {
    records[1].failed = true;
    records[1].error = "boom";
    records[1].tokens.clear();
    CostBenefitReport partial =
        cost_benefit_report(records, refs, 1, 2, "tied-multi", "ckpt.tmck");
    CHECK(partial.rows[0].failures == 1);
    CHECK(partial.rows[0].bleu ==
          corpus_bleu({"a b c", "a a"}, {"a b c", "a a"}));
    // Timing still counts the failed attempt.
    CHECK(partial.rows[0].total_seconds ==
          doctest::Approx(0.06).epsilon(1e-9));
  }

  SUBCASE("a combination whose decodes all failed scores zero") {
    for (int i = 0; i < 3; ++i) {
      records[static_cast<size_t>(i)].failed = true;
      records[static_cast<size_t>(i)].tokens.clear();
    }
    CostBenefitReport zero =
        cost_benefit_report(records, refs, 1, 2, "tied-multi", "ckpt.tmck");
    CHECK(zero.rows[0].bleu == 0);
    CHECK(zero.rows[0].failures == 3);
  }

  SUBCASE("coverage violations are rejected") {
    auto missing = records;
    missing.pop_back();
    CHECK_THROWS_WITH_AS(
        cost_benefit_report(missing, refs, 1, 2, "k", "c"),
        doctest::Contains("missing sentence"), std::invalid_argument);

    auto duplicated = records;
    duplicated.push_back(records[0]);
    CHECK_THROWS_WITH_AS(cost_benefit_report(duplicated, refs, 1, 2, "k", "c"),
                         doctest::Contains("duplicate record"),
                         std::invalid_argument);

    auto mixed = records;
    mixed[2].mode = "beam";
    CHECK_THROWS_WITH_AS(cost_benefit_report(mixed, refs, 1, 2, "k", "c"),
                         doctest::Contains("mixes modes"),
                         std::invalid_argument);

    auto outside = records;
    outside[0].n = 2;
    CHECK_THROWS_WITH_AS(cost_benefit_report(outside, refs, 1, 2, "k", "c"),
                         doctest::Contains("outside the grid"),
                         std::invalid_argument);

    auto stray = records;
    stray[0].sentence_id = 9;
    CHECK_THROWS_WITH_AS(cost_benefit_report(stray, refs, 1, 2, "k", "c"),
                         doctest::Contains("outside the reference corpus"),
                         std::invalid_argument);

    CHECK_THROWS_WITH_AS(cost_benefit_report({}, refs, 1, 2, "k", "c"),
                         doctest::Contains("no decode records"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(cost_benefit_report(records, {}, 1, 2, "k", "c"),
                         doctest::Contains("no references"),
                         std::invalid_argument);
  }
}

TEST_CASE("cost-benefit report validation enforces shape and timings") {
  CostBenefitReport report;
  report.enc_layers = 1;
  report.dec_layers = 2;
  report.sentences = 3;
  report.rows.resize(1);
  CHECK_THROWS_WITH_AS(report.validate(), doctest::Contains("expected 2 rows"),
                       std::invalid_argument);
  report.rows.resize(2);
  report.rows[0] = {1, 1, 0, 0.5, 0.1, 0};
  report.rows[1] = {1, 2, 0, 0.0, 0.0, 0};
  CHECK_THROWS_WITH_AS(report.validate(),
                       doctest::Contains("non-positive timing"),
                       std::invalid_argument);
  report.rows[1].total_seconds = 0.2;
  CHECK_NOTHROW(report.validate());
}

TEST_CASE("reports rebuilt from a written decode log are identical") {
  ModelConfig cfg = tiny_config();
  Rng rng(61);
  Parameters params = Parameters::init(cfg, rng);

  ToyTaskSpec spec;
  spec.task = "reverse";
  spec.vocab_symbols = 6;
  spec.min_len = 2;
  spec.max_len = 5;
  spec.size = 60;
  spec.seed = 17;
  ToyCorpus corpus = generate_toy_corpus(spec);

  BeamConfig bc;
  bc.max_len = 12;
  std::vector<DecodeRecord> records;
  CostBenefitReport direct = run_cost_benefit(
      params, corpus.test, "greedy", bc, "tied-multi", "ckpt.tmck", &records);
  REQUIRE(records.size() == corpus.test.size() * 4);

  fs::path log = fs::temp_directory_path() / "tiedmt_report_log.tsv";
  write_decode_log(log.string(), records);
  CostBenefitReport rebuilt =
      cost_benefit_report(read_decode_log(log.string()), corpus.test.tgt, 2, 2,
                          "tied-multi", "ckpt.tmck");

  REQUIRE(rebuilt.rows.size() == direct.rows.size());
  for (size_t i = 0; i < direct.rows.size(); ++i) {
    CHECK(rebuilt.rows[i].n == direct.rows[i].n);
    CHECK(rebuilt.rows[i].m == direct.rows[i].m);
    CHECK(rebuilt.rows[i].bleu == direct.rows[i].bleu);
    CHECK(rebuilt.rows[i].total_seconds == direct.rows[i].total_seconds);
    CHECK(rebuilt.rows[i].mean_seconds == direct.rows[i].mean_seconds);
    CHECK(rebuilt.rows[i].failures == direct.rows[i].failures);
  }
  CHECK(render_csv(rebuilt) == render_csv(direct));
  CHECK(render_text(rebuilt) == render_text(direct));
  CHECK(json_summary(rebuilt, nullptr, {}) == json_summary(direct, nullptr, {}));

  // chrF grids from the same log: spot-check against direct scoring.
  auto grids = chrf_grids_from_records(read_decode_log(log.string()),
                                       corpus.test.tgt, 2, 2);
  REQUIRE(grids.size() == corpus.test.size());
  for (const DecodeRecord& r : records) {
    if (r.sentence_id != 0) continue;
    Real direct_chrf = sentence_chrf(
        detokenize(r.tokens), detokenize(corpus.test.tgt[0]));
    CHECK(grids[0].at(r.n, r.m) == direct_chrf);
  }
}

TEST_CASE("chrF grids score failed decodes as empty hypotheses") {
  std::vector<IdSeq> refs = {{4, 5}};
  std::vector<DecodeRecord> records = {rec(0, 1, 1, {4, 5, 2}, 0.01)};
  records.push_back(rec(0, 1, 2, {}, 0.01));
  records.back().failed = true;
  auto grids = chrf_grids_from_records(records, refs, 1, 2);
  REQUIRE(grids.size() == 1);
  CHECK(grids[0].at(1, 1) == 1.0);  // exact match
  CHECK(grids[0].at(1, 2) == 0.0);  // failure counts as no output
}

TEST_CASE("oracle report histograms best and fastest-best labels") {
  CombinationGrid g1{2, 2, {0.2, 0.9, 0.9, 0.1}};  // tie (1,2) and (2,1)
  CombinationGrid g2{2, 2, {1.0, 0.5, 0.2, 0.2}};  // unique best (1,1)
  OracleReport report = oracle_report({g1, g2});
  CHECK(report.sentences == 2);
  // (2,1) decodes faster than (1,2): fewer decoder layers win.
  CHECK(report.fastest_best_counts == std::vector<int64_t>{1, 0, 1, 0});
  CHECK(report.best_counts == std::vector<int64_t>{1, 1, 1, 0});

  CHECK_THROWS_WITH_AS(oracle_report({}), doctest::Contains("no sentence"),
                       std::invalid_argument);
  CombinationGrid other{1, 2, {0.5, 0.5}};
  CHECK_THROWS_WITH_AS(oracle_report({g1, other}),
                       doctest::Contains("mixed grid shapes"),
                       std::invalid_argument);
}

TEST_CASE("model-size table reproduces the large-configuration ratios") {
  ModelConfig big;
  big.enc_layers = 6;
  big.dec_layers = 6;
  big.d_model = 512;
  big.heads = 8;
  big.d_ff = 2048;
  big.vocab = 32000;
  big.max_len = 256;

  ModelSizeReport report = report_model_sizes(big);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].label == "36 vanilla models");
  CHECK(report.rows[1].label == "single tied-multi model");
  CHECK(report.rows[2].label == "36 recurrently stacked models");
  CHECK(report.rows[3].label == "single tied-multi rs model");

  // Anchors established in the model tests.
  CHECK(report.rows[1].learnable == 60524544);
  CHECK(report.rows[3].learnable == 23742464);
  for (const ModelSizeRow& row : report.rows) {
    CHECK(row.stored == 3 * row.learnable);
    CHECK(row.ratio == doctest::Approx(static_cast<double>(row.learnable) /
                                       60524544.0));
  }
  CHECK(report.rows[1].ratio == 1.0);

  // Independent sum over the 36 per-combination configurations.
  int64_t vanilla_sum = 0;
  for (int n = 1; n <= 6; ++n)
    for (int m = 1; m <= 6; ++m) {
      ModelConfig sub = big;
      sub.enc_layers = n;
      sub.dec_layers = m;
      vanilla_sum += param_count(sub);
    }
  CHECK(report.rows[0].learnable == vanilla_sum);

  // Recurrent stacking makes the count depth-independent, so the stacked sum
  // is exactly 36 copies of the stacked model.
  CHECK(report.rows[2].learnable == 36 * report.rows[3].learnable);

  // Full-scale anchors: stored sizes 183M / 73M, ratios 25.16 / 14.33 / 0.40.
  CHECK(std::abs(report.rows[1].stored / 183e6 - 1) < 0.05);
  CHECK(std::abs(report.rows[3].stored / 73e6 - 1) < 0.05);
  CHECK(std::abs(report.rows[0].ratio / 25.16 - 1) < 0.03);
  CHECK(std::abs(report.rows[2].ratio / 14.33 - 1) < 0.03);
  CHECK(std::abs(report.rows[3].ratio / 0.40 - 1) < 0.05);

  ModelConfig stacked = big;
  stacked.recurrent_stacking = true;
  CHECK_THROWS_WITH_AS(report_model_sizes(stacked),
                       doctest::Contains("unstacked"), std::invalid_argument);

  std::string text = render_text(report);
  CHECK(text.find("36 vanilla models") != std::string::npos);
  CHECK(text.find("1.00") != std::string::npos);
  std::string csv = render_csv(report);
  CHECK(csv.find("model,learnable,stored,ratio") == 0);
}

TEST_CASE("renderers emit stable text, CSV and JSON") {
  std::vector<IdSeq> refs = {{4, 5}};
  std::vector<DecodeRecord> records = {rec(0, 1, 1, {4, 5, 2}, 0.012345678)};
  CostBenefitReport report =
      cost_benefit_report(records, refs, 1, 1, "tied-multi", "ckpt.tmck");

  std::string csv = render_csv(report);
  CHECK(csv == "n,m,bleu,total_seconds,mean_seconds,failures\n"
               "1,1,100.000000,0.012346,0.012346,0\n");
  std::string csv_stable = render_csv(report, true);
  CHECK(csv_stable == "n,m,bleu,failures\n1,1,100.000000,0\n");

  std::string text = render_text(report);
  CHECK(text.find("BLEU") != std::string::npos);
  CHECK(text.find("total_s") != std::string::npos);
  std::string text_stable = render_text(report, true);
  CHECK(text_stable.find("total_s") == std::string::npos);
  CHECK(text_stable.find("100.00") != std::string::npos);

  OracleReport oracle;
  oracle.enc_layers = 1;
  oracle.dec_layers = 1;
  oracle.sentences = 1;
  oracle.fastest_best_counts = {1};
  oracle.best_counts = {1};
  std::string json = json_summary(report, &oracle, {{"train.steps", "100"}});
  auto doc = nlohmann::json::parse(json);
  CHECK(doc["config"]["train.steps"] == "100");
  CHECK(doc["cost_benefit"]["rows"][0]["bleu"] == 100.0);
  CHECK(doc["cost_benefit"]["rows"][0].contains("total_seconds"));
  CHECK(doc["oracle"]["fastest_best_counts"][0] == 1);

  std::string stable = json_summary(report, &oracle, {{"train.steps", "100"}},
                                    true);
  auto stable_doc = nlohmann::json::parse(stable);
  CHECK_FALSE(stable_doc["cost_benefit"]["rows"][0].contains("total_seconds"));
  CHECK(stable == json_summary(report, &oracle, {{"train.steps", "100"}},
                               true));
}

TEST_CASE("distillation pipeline trains and scores the four-way comparison") {
  ToyTaskSpec spec;
  spec.task = "reverse";
  spec.vocab_symbols = 6;
  spec.min_len = 2;
  spec.max_len = 5;
  spec.size = 60;
  spec.seed = 29;
  ToyCorpus corpus = generate_toy_corpus(spec);

  ModelConfig mcfg = tiny_config();
  Rng rng(71);
  Parameters parent = Parameters::init(mcfg, rng);

  TrainingConfig tcfg;
  tcfg.steps = 12;
  tcfg.batch_size = 8;
  tcfg.warmup_steps = 8;
  tcfg.checkpoint_every = 12;
  tcfg.keep_last = 1;
  tcfg.seed = 3;

  BeamConfig bc;
  bc.beam = 2;
  bc.max_len = 12;

  fs::path out = fs::temp_directory_path() / "tiedmt_distill_test";
  fs::remove_all(out);
  fs::create_directories(out);

  DistillationReport report = run_distillation_pipeline(
      parent, corpus, tcfg, mcfg, bc, out.string());

  CHECK(report.pseudo_corpus_size + report.pseudo_failures ==
        corpus.train.size());
  CHECK(report.pseudo_failures == 0);
  REQUIRE(report.children.size() == 4);
  CHECK(report.children[0].kind == "tied-multi");
  CHECK_FALSE(report.children[0].distilled);
  CHECK(report.children[1].kind == "tied-multi");
  CHECK(report.children[1].distilled);
  CHECK(report.children[2].kind == "tied-multi-rs");
  CHECK(report.children[3].kind == "tied-multi-rs");
  for (const DistilledChild& child : report.children) {
    CHECK(child.greedy_bleu.values.size() == 4);
    CHECK(child.greedy_bleu_full == child.greedy_bleu.at(2, 2));
    CHECK(fs::exists(child.checkpoint));
  }

  // Without the distillation flag the child is a plain training run: the
  // checkpoint bytes match an independent train on the original corpus.
  TrainResult plain = train("tied-multi", corpus.train, tcfg, mcfg,
                            (out / "manual").string(), "manual");
  CHECK(slurp(report.children[0].checkpoint) ==
        slurp(plain.final_checkpoint));

  std::string text = render_text(report);
  CHECK(text.find("tied-multi-rs distilled") != std::string::npos);
  CHECK(text.find("gap") != std::string::npos);
  std::string csv = render_csv(report);
  CHECK(csv.find("kind,distilled,n,m,greedy_bleu") == 0);

  CHECK_THROWS_WITH_AS(
      train_and_score_child(corpus.train, corpus.test, "huge", false, tcfg,
                            mcfg, bc, out.string(), "x"),
      doctest::Contains("child kind"), std::invalid_argument);
}
