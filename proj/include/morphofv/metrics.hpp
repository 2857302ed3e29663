#pragma once

// Cosine ranking and (mean) average precision.

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "morphofv/error.hpp"

namespace morphofv {

// 0 when either side is the zero vector.
inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw DimensionError("cosine: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

struct RankedItem {
  std::string id;
  double score = 0.0;
  bool relevant = false;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedItem> items;  // score descending, ties by id ascending
};

inline void sort_ranking(std::vector<RankedItem>& items) {
  std::sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

// Uninterpolated AP: mean of precision@k over the relevant ranks, divided by
// the total number of relevant items.
inline double average_precision(const std::vector<bool>& relevance, std::size_t total_relevant) {
  if (total_relevant == 0) throw PreconditionError("average_precision: no relevant items");
  // Extended precision so small cases round to the exact fraction.
  long double sum = 0.0L;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (!relevance[k]) continue;
    ++hits;
    sum += static_cast<long double>(hits) / static_cast<long double>(k + 1);
  }
  return static_cast<double>(sum / static_cast<long double>(total_relevant));
}

inline double average_precision(const RankedList& list) {
  std::vector<bool> rel;
  rel.reserve(list.items.size());
  std::size_t total = 0;
  for (const auto& it : list.items) {
    rel.push_back(it.relevant);
    total += it.relevant ? 1 : 0;
  }
  return average_precision(rel, total);
}

struct ClassificationReport {
  std::vector<std::optional<double>> class_ap;  // nullopt for classes without positives
  std::vector<int> skipped_classes;
  double mean_ap = 0.0;
};

// Per class: rank every image by its probability for that class.
inline ClassificationReport map_classification(const std::vector<Eigen::VectorXd>& probabilities,
                                               const std::vector<int>& labels,
                                               const std::vector<std::string>& ids, int num_classes) {
  if (probabilities.size() != labels.size() || ids.size() != labels.size())
    throw DimensionError("map_classification: probabilities, labels and ids differ in length");
  ClassificationReport report;
  report.class_ap.assign(static_cast<std::size_t>(num_classes), std::nullopt);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    RankedList list;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (probabilities[i].size() != num_classes) throw DimensionError("map_classification: probability length");
      const bool rel = labels[i] == c;
      positives += rel ? 1 : 0;
      list.items.push_back({ids[i], probabilities[i][c], rel});
    }
    if (positives == 0) {
      report.skipped_classes.push_back(c);
      continue;
    }
    sort_ranking(list.items);
    const double ap = average_precision(list);
    report.class_ap[static_cast<std::size_t>(c)] = ap;
    sum += ap;
    ++counted;
  }
  report.mean_ap = counted > 0 ? sum / counted : 0.0;
  return report;
}

struct RetrievalFeature {
  std::string id;
  Eigen::VectorXd feature;
};

struct QueryResult {
  std::string id;
  std::optional<double> ap;  // nullopt when the query's class has no other member
};

struct RetrievalReport {
  std::vector<QueryResult> queries;
  std::vector<RankedList> rankings;  // filled only when requested
  std::size_t skipped = 0;
  double mean_ap = 0.0;
};

// Each item queries all others by cosine similarity; relevant = same label.
inline RetrievalReport map_retrieval(const std::vector<RetrievalFeature>& items, const std::vector<int>& labels,
                                     bool keep_rankings = false) {
  if (items.size() != labels.size()) throw DimensionError("map_retrieval: items and labels differ in length");
  RetrievalReport report;
  if (items.size() < 2) {
    report.skipped = items.size();
    for (const auto& it : items) report.queries.push_back({it.id, std::nullopt});
    return report;
  }
  for (const auto& it : items)
    if (!it.feature.allFinite()) throw PreconditionError("map_retrieval: non-finite feature for " + it.id);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < items.size(); ++q) {
    RankedList list;
    list.query_id = items[q].id;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i == q) continue;
      const bool rel = labels[i] == labels[q];
      positives += rel ? 1 : 0;
      list.items.push_back({items[i].id, cosine(items[q].feature, items[i].feature), rel});
    }
    sort_ranking(list.items);
    if (positives == 0) {
      report.queries.push_back({items[q].id, std::nullopt});
      ++report.skipped;
    } else {
      const double ap = average_precision(list);
      report.queries.push_back({items[q].id, ap});
      sum += ap;
      ++counted;
    }
    if (keep_rankings) report.rankings.push_back(std::move(list));
  }
  report.mean_ap = counted > 0 ? sum / static_cast<double>(counted) : 0.0;
  return report;
}

}  // namespace morphofv
