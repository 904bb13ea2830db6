#include "candfuse/textinfo.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "candfuse/metrics.hpp"

namespace candfuse {

std::vector<int> unigram_set(const std::vector<int>& ids) {
  std::set<int> s;
  for (int id : ids)
    if (!Vocab::is_special(id)) s.insert(id);
  return std::vector<int>(s.begin(), s.end());
}

InfoSplit info_split(const Candidate& cand, const Document& gold) {
  std::vector<int> cu = unigram_set(cand.ids);
  std::vector<int> gu = unigram_set(gold.ids);
  InfoSplit out;
  std::set_intersection(cu.begin(), cu.end(), gu.begin(), gu.end(),
                        std::back_inserter(out.positive));
  std::set_difference(cu.begin(), cu.end(), gu.begin(), gu.end(),
                      std::back_inserter(out.negative));
  return out;
}

BowTarget bow_target(const std::vector<int>& ids, int vocab_size) {
  BowTarget t;
  t.weights.assign(static_cast<size_t>(vocab_size), 0.0);
  if (ids.empty()) return t;
  double w = 1.0 / static_cast<double>(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab_size)
      throw std::invalid_argument("bow_target: id outside vocabulary");
    t.weights[static_cast<size_t>(id)] = w;
  }
  t.empty = false;
  return t;
}

PositiveInfoReport analyze_positive_info(const std::vector<Instance>& instances,
                                         const std::vector<int>& ks) {
  PositiveInfoReport report;
  std::map<std::string, std::pair<double, long>> origin_acc;  // sum, count
  std::map<int, std::pair<double, long>> topk_acc;
  for (const auto& inst : instances) {
    if (!inst.gold)
      throw std::invalid_argument("analyze_positive_info: instance " +
                                  inst.id + " has no gold summary");
    if (inst.pool.empty())
      throw std::invalid_argument("analyze_positive_info: instance " +
                                  inst.id + " has an empty pool");
    std::vector<std::vector<int>> positives;
    for (const auto& cand : inst.pool) {
      InfoSplit split = info_split(cand, *inst.gold);
      auto& acc = origin_acc[cand.origin];
      acc.first += static_cast<double>(split.positive.size());
      acc.second += 1;
      positives.push_back(std::move(split.positive));
    }
    std::vector<int> order = oracle_rank(inst.pool, *inst.gold);
    for (int k : ks) {
      std::set<int> unioned;
      long take = std::min<long>(k, static_cast<long>(order.size()));
      for (long i = 0; i < take; ++i) {
        const auto& p = positives[static_cast<size_t>(order[static_cast<size_t>(i)])];
        unioned.insert(p.begin(), p.end());
      }
      auto& acc = topk_acc[k];
      acc.first += static_cast<double>(unioned.size());
      acc.second += 1;
    }
  }
  for (const auto& [origin, acc] : origin_acc)
    report.per_origin.emplace_back(origin, acc.first / static_cast<double>(acc.second));
  for (const auto& [k, acc] : topk_acc)
    report.per_topk.emplace_back(k, acc.first / static_cast<double>(acc.second));
  return report;
}

std::string format_positive_info_report(const PositiveInfoReport& report) {
  std::ostringstream out;
  out << "mean positive-word count by candidate origin\n";
  for (const auto& [origin, mean] : report.per_origin)
    out << "  " << origin << "\t" << mean << "\n";
  out << "mean positive-word count of combined top-k candidates\n";
  for (const auto& [k, mean] : report.per_topk)
    out << "  k=" << k << "\t" << mean << "\n";
  return out.str();
}

}  // namespace candfuse
