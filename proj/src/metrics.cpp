#include "cagnet/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "cagnet/error.hpp"

namespace cagnet {

MetricsReport compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                              std::size_t num_classes) {
  if (y_true.size() != y_pred.size()) {
    throw ValidationError("compute_metrics: " + std::to_string(y_true.size()) + " true labels but " +
                          std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw ValidationError("compute_metrics: no samples");
  if (num_classes == 0) throw ValidationError("compute_metrics: num_classes must be positive");
  MetricsReport r;
  r.count = y_true.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    for (int v : {y_true[i], y_pred[i]}) {
      if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
        throw ValidationError("compute_metrics: label " + std::to_string(v) + " at index " + std::to_string(i) +
                              " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
    ++r.confusion[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }
  std::size_t trace = 0;
  r.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    trace += r.confusion[c][c];
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      predicted += r.confusion[k][c];
      actual += r.confusion[c][k];
    }
    auto& m = r.per_class[c];
    m.support = actual;
    const double tp = static_cast<double>(r.confusion[c][c]);
    m.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    m.recall = actual ? tp / static_cast<double>(actual) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.macro_f1 += m.f1;
    r.weighted_f1 += m.f1 * static_cast<double>(actual);
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(r.count);
  r.macro_f1 /= static_cast<double>(num_classes);
  r.weighted_f1 /= static_cast<double>(r.count);
  return r;
}

namespace {

std::string name_of(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() ? names[c] : std::to_string(c);
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json(const std::vector<std::string>& class_names) const {
  nlohmann::ordered_json j;
  j["count"] = count;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["weighted_f1"] = weighted_f1;
  auto classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    classes.push_back({{"class", name_of(class_names, c)},
                       {"precision", per_class[c].precision},
                       {"recall", per_class[c].recall},
                       {"f1", per_class[c].f1},
                       {"support", per_class[c].support}});
  }
  j["per_class"] = classes;
  j["confusion"] = confusion;
  return j;
}

std::string MetricsReport::to_table(const std::vector<std::string>& class_names) const {
  std::size_t width = 5;
  for (std::size_t c = 0; c < per_class.size(); ++c) width = std::max(width, name_of(class_names, c).size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %8s\n", static_cast<int>(width), "class", "precision", "recall",
                "f1", "support");
  out << buf;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& m = per_class[c];
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %8zu\n", static_cast<int>(width),
                  name_of(class_names, c).c_str(), m.precision, m.recall, m.f1, m.support);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "accuracy %.4f  macro_f1 %.4f  weighted_f1 %.4f  n=%zu\n", accuracy, macro_f1,
                weighted_f1, count);
  out << buf;
  return out.str();
}

}  // namespace cagnet
