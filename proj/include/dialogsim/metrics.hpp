#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "dialogsim/acts.hpp"
#include "dialogsim/error.hpp"
#include "dialogsim/markup.hpp"

namespace dialogsim {

/// Whole-dialog act sequence: the acts of every user and nlg turn in order,
/// turns separated by ';'. Call turns carry no acts and are skipped.
inline std::string sequence_string(const Dialog& d) {
  std::string out;
  for (const auto& t : d.turns) {
    const auto* acts = t.acts();
    if (!acts) continue;
    if (acts->empty()) throw Error("turn " + std::to_string(t.index) + " has no dialog acts");
    if (!out.empty()) out += ';';
    out += to_string(*acts);
  }
  return out;
}

struct TurnStats {
  double mean = 0;
  double p75 = 0;
  double p95 = 0;
};

/// Nearest-rank percentile of sorted values: the ceil(p*N)-th smallest.
inline double nearest_rank(const std::vector<std::size_t>& sorted, double p) {
  if (sorted.empty()) throw Error("percentile of an empty sample");
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return static_cast<double>(sorted[rank - 1]);
}

/// A turn is one markup line: user utterance, API call or nlg response.
inline TurnStats turn_stats(const std::vector<Dialog>& corpus) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<std::size_t> lens;
  lens.reserve(corpus.size());
  double sum = 0;
  for (const auto& d : corpus) {
    lens.push_back(d.turns.size());
    sum += static_cast<double>(d.turns.size());
  }
  std::sort(lens.begin(), lens.end());
  return {sum / static_cast<double>(corpus.size()), nearest_rank(lens, 0.75), nearest_rank(lens, 0.95)};
}

inline std::unordered_map<std::string, std::size_t> sequence_counts(const std::vector<Dialog>& corpus) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : corpus) ++counts[sequence_string(d)];
  return counts;
}

/// Plug-in entropy in nats of a count multiset.
inline double entropy_of_counts(const std::vector<std::size_t>& counts) {
  double n = 0;
  for (const auto c : counts) n += static_cast<double>(c);
  if (n == 0) throw Error("entropy of an empty sample");
  double h = 0;
  for (const auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

inline double entropy(const std::vector<Dialog>& corpus) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<std::size_t> counts;
  for (const auto& [_, c] : sequence_counts(corpus)) counts.push_back(c);
  std::sort(counts.begin(), counts.end());
  return entropy_of_counts(counts);
}

struct UniqueSequences {
  std::size_t count = 0;
  double fraction = 0;
};

inline UniqueSequences unique_sequences(const std::vector<Dialog>& corpus) {
  if (corpus.empty()) throw Error("empty corpus");
  const auto n = sequence_counts(corpus).size();
  return {n, static_cast<double>(n) / static_cast<double>(corpus.size())};
}

struct VariationReport {
  std::size_t n_dialogs = 0;
  double turns_mean = 0;
  double turns_p75 = 0;
  double turns_p95 = 0;
  std::size_t unique_sequences = 0;
  double fraction_unique = 0;
  double entropy_nats = 0;
};

inline VariationReport variation_report(const std::vector<Dialog>& corpus) {
  if (corpus.empty()) throw Error("empty corpus");
  VariationReport r;
  r.n_dialogs = corpus.size();
  const auto ts = turn_stats(corpus);
  r.turns_mean = ts.mean;
  r.turns_p75 = ts.p75;
  r.turns_p95 = ts.p95;
  const auto counts = sequence_counts(corpus);
  r.unique_sequences = counts.size();
  r.fraction_unique = static_cast<double>(counts.size()) / static_cast<double>(corpus.size());
  std::vector<std::size_t> c;
  for (const auto& [_, k] : counts) c.push_back(k);
  std::sort(c.begin(), c.end());
  r.entropy_nats = entropy_of_counts(c);
  return r;
}

inline nlohmann::json report_to_json(const VariationReport& r) {
  return {{"n_dialogs", r.n_dialogs},           {"turns_mean", r.turns_mean},
          {"turns_p75", r.turns_p75},           {"turns_p95", r.turns_p95},
          {"unique_sequences", r.unique_sequences}, {"fraction_unique", r.fraction_unique},
          {"entropy_nats", r.entropy_nats}};
}

/// Aligned plain-text table, one row per named report.
inline std::string report_table(const std::vector<std::pair<std::string, VariationReport>>& rows) {
  std::ostringstream os;
  std::size_t w = 6;
  for (const auto& [name, _] : rows) w = std::max(w, name.size());
  os << std::left << std::setw(static_cast<int>(w)) << "corpus" << std::right << std::setw(10) << "dialogs"
     << std::setw(10) << "mean" << std::setw(8) << "P-75" << std::setw(8) << "P-95" << std::setw(12) << "unique"
     << std::setw(12) << "frac" << std::setw(10) << "entropy" << '\n';
  os << std::fixed;
  for (const auto& [name, r] : rows) {
    os << std::left << std::setw(static_cast<int>(w)) << name << std::right << std::setw(10) << r.n_dialogs
       << std::setw(10) << std::setprecision(2) << r.turns_mean << std::setw(8) << std::setprecision(0) << r.turns_p75
       << std::setw(8) << r.turns_p95 << std::setw(12) << r.unique_sequences << std::setw(12) << std::setprecision(4)
       << r.fraction_unique << std::setw(10) << std::setprecision(2) << r.entropy_nats << '\n';
  }
  return os.str();
}

}  // namespace dialogsim
