#ifndef DUALDET_REPORT_H_
#define DUALDET_REPORT_H_

#include <string>
#include <vector>

#include "dualdet/eval.h"
#include "dualdet/simloop.h"
#include "json.hpp"

namespace dualdet {

// CSV files open with "# key=value" lines echoing the run configuration,
// followed by a header row. Numbers use %.10g.
std::string FormatNumber(double v);
std::string ConfigEchoLines(const nlohmann::json& config);

inline constexpr char kMetricsCsvHeader[] =
    "map,ap50,ap75,ar_large,p_80,r_80,f1_80,p_90,r_90,f1_90";

// Absent values (no predictions, no large ground truth) are written as
// null in JSON and as empty CSV fields.
struct MetricsOutput {
  std::optional<double> map, ap50, ap75, ar_large;
  std::optional<PrfEntry> prf80, prf90;
};

MetricsOutput ToMetricsOutput(const MetricsReport& report, bool has_predictions);
nlohmann::json MetricsToJson(const MetricsOutput& m, const nlohmann::json& config);
std::string MetricsToCsv(const MetricsOutput& m, const nlohmann::json& config);

nlohmann::json HistoryToJson(const TrainHistory& h, const nlohmann::json& config);
std::string HistoryToCsv(const TrainHistory& h, const nlohmann::json& config);

std::string ThresholdSweepToCsv(const std::vector<ThresholdRow>& rows,
                                const nlohmann::json& config);
std::string QuerySweepToCsv(const std::vector<QueryRow>& rows,
                            const nlohmann::json& config);
// Wall time is left out so the file is reproducible byte for byte.
std::string StrategyTableToCsv(const std::vector<StrategyRow>& rows,
                               const nlohmann::json& config);

void WriteTextFile(const std::string& path, const std::string& text);

}  // namespace dualdet

#endif  // DUALDET_REPORT_H_
