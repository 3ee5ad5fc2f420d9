#include "tiedmt/metrics.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tiedmt {

namespace {

std::string strip_whitespace(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  return out;
}

// Multiset of character n-grams of one order.
std::map<std::string, int> char_ngrams(const std::string& text, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(text.size()) >= n)
    for (size_t i = 0; i + static_cast<size_t>(n) <= text.size(); ++i)
      ++counts[text.substr(i, static_cast<size_t>(n))];
  return counts;
}

int clipped_overlap(const std::map<std::string, int>& a,
                    const std::map<std::string, int>& b) {
  int total = 0;
  for (const auto& [gram, count] : a) {
    auto it = b.find(gram);
    if (it != b.end()) total += std::min(count, it->second);
  }
  return total;
}

int total_count(const std::map<std::string, int>& counts) {
  int total = 0;
  for (const auto& [gram, count] : counts) total += count;
  return total;
}

// Punctuation-splitting word tokenizer: alphanumeric runs stay together,
// every other non-space character becomes its own token.
std::vector<std::string> bleu_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (std::isalnum(u)) {
      current.push_back(c);
    } else {
      flush();
      tokens.emplace_back(1, c);
    }
  }
  flush();
  return tokens;
}

std::map<std::string, int> word_ngrams(const std::vector<std::string>& tokens,
                                       int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) >= n)
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
      std::string key = tokens[i];
      for (size_t k = 1; k < static_cast<size_t>(n); ++k)
        key += '\x1f' + tokens[i + k];
      ++counts[key];
    }
  return counts;
}

}  // namespace

Real sentence_chrf(const std::string& hyp, const std::string& ref, int max_n,
                   Real beta) {
  if (max_n < 1) throw std::invalid_argument("chrf: max_n must be positive");
  if (beta < Real{0}) throw std::invalid_argument("chrf: beta must be >= 0");
  std::string h = strip_whitespace(hyp);
  std::string r = strip_whitespace(ref);
  if (h.empty() && r.empty()) return 1;
  if (h.empty() || r.empty()) return 0;

  Real sum_p = 0, sum_r = 0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    auto hc = char_ngrams(h, n);
    auto rc = char_ngrams(r, n);
    int ht = total_count(hc);
    int rt = total_count(rc);
    if (ht == 0 && rt == 0) continue;  // both too short for this order
    ++orders;
    int match = clipped_overlap(hc, rc);
    if (ht > 0) sum_p += static_cast<Real>(match) / static_cast<Real>(ht);
    if (rt > 0) sum_r += static_cast<Real>(match) / static_cast<Real>(rt);
  }
  Real chr_p = sum_p / static_cast<Real>(orders);
  Real chr_r = sum_r / static_cast<Real>(orders);
  Real denom = beta * beta * chr_p + chr_r;
  if (denom == Real{0}) return 0;
  return (Real{1} + beta * beta) * chr_p * chr_r / denom;
}

Real corpus_bleu(const std::vector<std::string>& hyps,
                 const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument(
        "bleu: hypothesis and reference counts differ");
  if (hyps.empty()) throw std::invalid_argument("bleu: empty corpus");

  constexpr int kMaxOrder = 4;
  int64_t matches[kMaxOrder] = {0, 0, 0, 0};
  int64_t totals[kMaxOrder] = {0, 0, 0, 0};
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t s = 0; s < hyps.size(); ++s) {
    auto ht = bleu_tokenize(hyps[s]);
    auto rt = bleu_tokenize(refs[s]);
    hyp_len += static_cast<int64_t>(ht.size());
    ref_len += static_cast<int64_t>(rt.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      auto hg = word_ngrams(ht, n);
      auto rg = word_ngrams(rt, n);
      matches[n - 1] += clipped_overlap(hg, rg);
      totals[n - 1] += total_count(hg);
    }
  }
  if (hyp_len == 0) return 0;

  Real log_sum = 0;
  int effective_orders = 0;
  Real smooth = 1;
  for (int n = 1; n <= kMaxOrder; ++n) {
    if (totals[n - 1] == 0) continue;  // corpus too short for this order
    ++effective_orders;
    Real p;
    if (matches[n - 1] > 0) {
      p = static_cast<Real>(matches[n - 1]) /
          static_cast<Real>(totals[n - 1]);
    } else if (n == 1) {
      return 0;  // no unigram overlap at all
    } else {
      smooth *= 2;
      p = Real{1} / (smooth * static_cast<Real>(totals[n - 1]));
    }
    log_sum += std::log(p);
  }
  if (effective_orders == 0) return 0;

  Real bp = hyp_len >= ref_len
                ? Real{1}
                : std::exp(Real{1} - static_cast<Real>(ref_len) /
                                         static_cast<Real>(hyp_len));
  return Real{100} * bp *
         std::exp(log_sum / static_cast<Real>(effective_orders));
}

bool is_faster(const LayerCombination& a, const LayerCombination& b) {
  return a.m < b.m || (a.m == b.m && a.n < b.n);
}

void CombinationGrid::validate() const {
  if (enc_layers < 1 || dec_layers < 1)
    throw std::invalid_argument("grid: layer counts must be positive");
  if (values.size() !=
      static_cast<size_t>(enc_layers) * static_cast<size_t>(dec_layers))
    throw std::invalid_argument("grid: wrong number of entries");
  for (Real v : values)
    if (!std::isfinite(v))
      throw std::invalid_argument("grid: entries must be finite");
}

LayerCombination oracle_combination(const CombinationGrid& grid) {
  return oracle_label_set(grid).fastest_best;
}

OracleLabel oracle_label_set(const CombinationGrid& grid) {
  grid.validate();
  Real best_value = grid.values[0];
  for (Real v : grid.values) best_value = std::max(best_value, v);

  OracleLabel label;
  for (int n = 1; n <= grid.enc_layers; ++n)
    for (int m = 1; m <= grid.dec_layers; ++m)
      if (grid.at(n, m) == best_value)  // exact ties only, by design
        label.best.push_back({n, m});
  label.fastest_best = label.best.front();
  for (const LayerCombination& c : label.best)
    if (is_faster(c, label.fastest_best)) label.fastest_best = c;
  return label;
}

std::vector<int64_t> oracle_distribution(const std::vector<OracleLabel>& labels,
                                         int enc_layers, int dec_layers) {
  if (enc_layers < 1 || dec_layers < 1)
    throw std::invalid_argument("histogram: layer counts must be positive");
  std::vector<int64_t> bins(
      static_cast<size_t>(enc_layers) * static_cast<size_t>(dec_layers), 0);
  for (const OracleLabel& label : labels) {
    const LayerCombination& c = label.fastest_best;
    if (c.n < 1 || c.n > enc_layers || c.m < 1 || c.m > dec_layers)
      throw std::invalid_argument("histogram: label outside the grid");
    ++bins[static_cast<size_t>((c.n - 1) * dec_layers + (c.m - 1))];
  }
  return bins;
}

void write_grid_file(const std::string& path,
                     const std::vector<CombinationGrid>& rows) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw std::runtime_error("grid file " + path + ": cannot open");
  if (rows.empty()) throw std::invalid_argument("grid file: no rows");
  const int n_layers = rows.front().enc_layers;
  const int m_layers = rows.front().dec_layers;
  file << "# sentence_id then one value per layer combination (n,m), n in 1.."
       << n_layers << ", m in 1.." << m_layers
       << ", decoder index fastest-varying\n";
  char buffer[40];
  for (size_t s = 0; s < rows.size(); ++s) {
    rows[s].validate();
    if (rows[s].enc_layers != n_layers || rows[s].dec_layers != m_layers)
      throw std::invalid_argument("grid file: mixed grid shapes");
    file << s;
    for (Real v : rows[s].values) {
      std::snprintf(buffer, sizeof buffer, "%.17g", v);
      file << '\t' << buffer;
    }
    file << '\n';
  }
  if (!file) throw std::runtime_error("grid file " + path + ": write failed");
}

std::vector<CombinationGrid> read_grid_file(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("grid file " + path + ": cannot open");
  std::string header;
  if (!std::getline(file, header) || header.empty() || header[0] != '#')
    throw std::runtime_error("grid file " + path + ": missing header");
  int n_layers = 0, m_layers = 0;
  if (std::sscanf(header.c_str(),
                  "# sentence_id then one value per layer combination (n,m), "
                  "n in 1..%d, m in 1..%d",
                  &n_layers, &m_layers) != 2)
    throw std::runtime_error("grid file " + path + ": unreadable header");

  std::vector<CombinationGrid> rows;
  std::string line;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    size_t sentence_id = 0;
    if (!(fields >> sentence_id) || sentence_id != rows.size())
      throw std::runtime_error("grid file " + path +
                               ": rows must be consecutively numbered");
    CombinationGrid grid;
    grid.enc_layers = n_layers;
    grid.dec_layers = m_layers;
    Real v;
    while (fields >> v) grid.values.push_back(v);
    grid.validate();
    rows.push_back(std::move(grid));
  }
  if (rows.empty())
    throw std::runtime_error("grid file " + path + ": no rows");
  return rows;
}

}  // namespace tiedmt
