#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace cagnet {

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct MetricsReport {
  double accuracy = 0;
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0;
  double weighted_f1 = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
  std::size_t count = 0;

  // `class_names`, when non-empty, labels the per-class entries.
  nlohmann::ordered_json to_json(const std::vector<std::string>& class_names = {}) const;
  std::string to_table(const std::vector<std::string>& class_names = {}) const;
};

// Precision, recall and F1 are 0 for a class whose denominator is 0.
MetricsReport compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                              std::size_t num_classes);

}  // namespace cagnet
