#include "candfuse/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace candfuse {

namespace {

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

template <typename Tok>
RougeScore rouge_n_impl(const std::vector<Tok>& cand,
                        const std::vector<Tok>& ref, int n) {
  if (n < 1 || n > 2) throw std::invalid_argument("rouge_n: order must be 1 or 2");
  long nc = static_cast<long>(cand.size()) - n + 1;
  long nr = static_cast<long>(ref.size()) - n + 1;
  if (nc <= 0 || nr <= 0) return {};
  std::map<std::vector<Tok>, long> ref_counts;
  for (long i = 0; i < nr; ++i)
    ++ref_counts[std::vector<Tok>(ref.begin() + i, ref.begin() + i + n)];
  std::map<std::vector<Tok>, long> cand_counts;
  for (long i = 0; i < nc; ++i)
    ++cand_counts[std::vector<Tok>(cand.begin() + i, cand.begin() + i + n)];
  long overlap = 0;
  for (const auto& [gram, count] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) overlap += std::min(count, it->second);
  }
  RougeScore s;
  s.precision = static_cast<double>(overlap) / static_cast<double>(nc);
  s.recall = static_cast<double>(overlap) / static_cast<double>(nr);
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

template <typename Tok>
RougeScore rouge_l_impl(const std::vector<Tok>& cand,
                        const std::vector<Tok>& ref) {
  if (cand.empty() || ref.empty()) return {};
  size_t m = cand.size(), n = ref.size();
  std::vector<long> prev(n + 1, 0), cur(n + 1, 0);
  for (size_t i = 1; i <= m; ++i) {
    for (size_t j = 1; j <= n; ++j) {
      if (cand[i - 1] == ref[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  long lcs = prev[n];
  RougeScore s;
  s.precision = static_cast<double>(lcs) / static_cast<double>(m);
  s.recall = static_cast<double>(lcs) / static_cast<double>(n);
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n) {
  return rouge_n_impl(candidate, reference, n);
}
RougeScore rouge_n(const std::vector<int>& candidate,
                   const std::vector<int>& reference, int n) {
  return rouge_n_impl(candidate, reference, n);
}

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
  return rouge_l_impl(candidate, reference);
}
RougeScore rouge_l(const std::vector<int>& candidate,
                   const std::vector<int>& reference) {
  return rouge_l_impl(candidate, reference);
}

std::vector<int> oracle_rank(const std::vector<Candidate>& pool,
                             const Document& gold) {
  if (pool.empty()) throw std::invalid_argument("oracle_rank: empty pool");
  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(pool.size());
  for (size_t i = 0; i < pool.size(); ++i)
    score[i] = rouge_n(pool[i].words, gold.words, 1).f1;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)];
  });
  return order;
}

}  // namespace candfuse
