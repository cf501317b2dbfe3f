#pragma once

// Reference implementations used only by tests. Each one computes its
// result directly from the definition, without calling library code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

// -sum p ln p in long double with compensated summation.
inline long double entropy(const std::vector<double>& probs) {
  long double sum = 0.0L, comp = 0.0L;
  for (double p : probs) {
    if (p <= 0.0) continue;
    const long double term = -static_cast<long double>(p) * std::log(static_cast<long double>(p));
    const long double t = sum + term;
    if (std::fabs(sum) >= std::fabs(term)) comp += (sum - t) + term;
    else comp += (term - t) + sum;
    sum = t;
  }
  return sum + comp;
}

// Smallest integer c >= x, with x nudged down by 1e-9 so 0.1 * 30 counts as 3.
inline std::size_t ceil_count(double x) {
  std::size_t c = 0;
  while (static_cast<double>(c) < x - 1e-9) ++c;
  return c;
}

// Fallback by pairwise ranking: i is kept when fewer than `count` indices
// outrank it (higher value, or equal value at a lower index).
inline std::vector<std::size_t> top_by_rank(const std::vector<double>& h, double frac) {
  const std::size_t count = std::max<std::size_t>(1, ceil_count(frac * static_cast<double>(h.size())));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      if (h[j] > h[i] || (h[j] == h[i] && j < i)) ++rank;
    }
    if (rank < count) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> key_tokens(const std::vector<double>& hg, const std::vector<double>& hu,
                                           double alpha, double frac) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hg.size(); ++i) {
    if (std::fabs(hg[i] - hu[i]) > alpha) out.push_back(i);
  }
  return out.empty() ? top_by_rank(hg, frac) : out;
}

// Exact two-sided sign test p from 128-bit binomial coefficients (n <= 64).
inline long double sign_test_p(unsigned wins, unsigned losses) {
  const unsigned n = wins + losses;
  const unsigned m = std::min(wins, losses);
  unsigned __int128 sum = 0, c = 1;
  for (unsigned i = 0; i <= m; ++i) {
    sum += c;
    c = c * (n - i) / (i + 1);
  }
  const long double p = 2.0L * std::ldexp(static_cast<long double>(sum), -static_cast<int>(n));
  return std::min(1.0L, p);
}

// Pair counting over correct/incorrect utilities; ties count as discordant.
inline double tau(const std::vector<std::pair<double, double>>& correct_vs_wrong) {
  double c = 0, d = 0;
  for (const auto& [u_correct, u_wrong] : correct_vs_wrong) {
    if (u_correct > u_wrong) c += 1;
    else d += 1;
  }
  return (c - d) / (c + d);
}

inline double mrr(const std::vector<std::vector<std::string>>& runs, const std::vector<std::string>& gold) {
  double sum = 0;
  for (std::size_t q = 0; q < runs.size(); ++q) {
    for (std::size_t r = 1; r <= runs[q].size(); ++r) {
      if (runs[q][r - 1] == gold[q]) {
        sum += 1.0 / static_cast<double>(r);
        break;
      }
    }
  }
  return runs.empty() ? 0.0 : sum / static_cast<double>(runs.size());
}

inline double recall(const std::vector<std::vector<std::string>>& runs, const std::vector<std::string>& gold,
                     std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < runs.size(); ++q) {
    bool hit = false;
    for (std::size_t r = 0; r < runs[q].size() && r < k; ++r) hit = hit || runs[q][r] == gold[q];
    hits += hit;
  }
  return runs.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(runs.size());
}

// BM25 straight from the definition over pre-tokenized documents.
inline double bm25(const std::vector<std::vector<std::string>>& docs, std::size_t doc,
                   const std::vector<std::string>& query, double k1, double b) {
  double total_len = 0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  const double avg = total_len / static_cast<double>(docs.size());
  const double n = static_cast<double>(docs.size());
  double score = 0;
  for (const auto& t : query) {
    double df = 0;
    for (const auto& d : docs) df += std::count(d.begin(), d.end(), t) > 0 ? 1 : 0;
    const double tf = static_cast<double>(std::count(docs[doc].begin(), docs[doc].end(), t));
    if (tf == 0) continue;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double len = static_cast<double>(docs[doc].size());
    score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
  }
  return score;
}

// Peaked and uniform Needle LM entropies from the closed form.
inline double needle_peaked(double lambda, double v) {
  return -lambda * std::log(lambda) - (1.0 - lambda) * std::log((1.0 - lambda) / (v - 1.0));
}

}  // namespace oracle
