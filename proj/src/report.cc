#include "dualdet/report.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dualdet/error.h"

namespace dualdet {
namespace {

using nlohmann::json;

std::string Opt(const std::optional<double>& v) {
  return v ? FormatNumber(*v) : std::string();
}

json OptJson(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<PrfEntry> FindPrf(const MetricsReport& r, double iou) {
  for (const PrfEntry& e : r.prf) {
    if (std::abs(e.iou - iou) < 1e-12) return e;
  }
  return std::nullopt;
}

}  // namespace

std::string FormatNumber(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string ConfigEchoLines(const json& config) {
  std::ostringstream out;
  if (!config.is_object()) return {};
  for (const auto& [key, value] : config.items()) {
    out << "# " << key << "=" << (value.is_string() ? value.get<std::string>() : value.dump())
        << "\n";
  }
  return out.str();
}

MetricsOutput ToMetricsOutput(const MetricsReport& report, bool has_predictions) {
  MetricsOutput m;
  if (has_predictions) {
    m.map = report.map;
    m.ap50 = report.ap50;
    m.ap75 = report.ap75;
    m.ar_large = report.ar_large;
  }
  m.prf80 = FindPrf(report, 0.8);
  m.prf90 = FindPrf(report, 0.9);
  return m;
}

json MetricsToJson(const MetricsOutput& m, const json& config) {
  json j = {{"map", OptJson(m.map)},
            {"ap50", OptJson(m.ap50)},
            {"ap75", OptJson(m.ap75)},
            {"ar_large", OptJson(m.ar_large)}};
  auto put = [&](const std::optional<PrfEntry>& e, const char* suffix) {
    j[std::string("p_") + suffix] = e ? json(e->precision) : json(nullptr);
    j[std::string("r_") + suffix] = e ? json(e->recall) : json(nullptr);
    j[std::string("f1_") + suffix] = e ? json(e->f1) : json(nullptr);
  };
  put(m.prf80, "80");
  put(m.prf90, "90");
  j["config"] = config;
  return j;
}

std::string MetricsToCsv(const MetricsOutput& m, const json& config) {
  std::ostringstream out;
  out << ConfigEchoLines(config) << kMetricsCsvHeader << "\n";
  auto prf = [](const std::optional<PrfEntry>& e) {
    if (!e) return std::string(",,");
    return FormatNumber(e->precision) + "," + FormatNumber(e->recall) + "," +
           FormatNumber(e->f1);
  };
  out << Opt(m.map) << "," << Opt(m.ap50) << "," << Opt(m.ap75) << ","
      << Opt(m.ar_large) << "," << prf(m.prf80) << "," << prf(m.prf90) << "\n";
  return out.str();
}

json HistoryToJson(const TrainHistory& h, const json& config) {
  json rows = json::array();
  for (const EpochRecord& r : h.epochs) {
    rows.push_back({{"epoch", r.epoch},
                    {"sup_loss", r.sup_loss},
                    {"unsup_loss", r.unsup_loss},
                    {"pseudo_per_iter", r.pseudo_per_iter},
                    {"kept_ratio", r.kept_ratio},
                    {"eval_map", OptJson(r.eval_map)},
                    {"duplicate_rate", OptJson(r.duplicate_rate)}});
  }
  return {{"config", config}, {"epochs", rows}};
}

std::string HistoryToCsv(const TrainHistory& h, const json& config) {
  std::ostringstream out;
  out << ConfigEchoLines(config)
      << "epoch,sup_loss,unsup_loss,pseudo_per_iter,kept_ratio,eval_map,duplicate_rate\n";
  for (const EpochRecord& r : h.epochs) {
    out << r.epoch << "," << FormatNumber(r.sup_loss) << "," << FormatNumber(r.unsup_loss)
        << "," << FormatNumber(r.pseudo_per_iter) << "," << FormatNumber(r.kept_ratio)
        << "," << Opt(r.eval_map) << "," << Opt(r.duplicate_rate) << "\n";
  }
  return out.str();
}

std::string ThresholdSweepToCsv(const std::vector<ThresholdRow>& rows,
                                const json& config) {
  std::ostringstream out;
  out << ConfigEchoLines(config) << "tau,map,pseudo_per_iter\n";
  for (const auto& r : rows) {
    out << FormatNumber(r.tau) << "," << FormatNumber(r.map) << ","
        << FormatNumber(r.pseudo_per_iter) << "\n";
  }
  return out.str();
}

std::string QuerySweepToCsv(const std::vector<QueryRow>& rows, const json& config) {
  std::ostringstream out;
  out << ConfigEchoLines(config) << "n,t,map\n";
  for (const auto& r : rows) out << r.n << "," << r.t << "," << FormatNumber(r.map) << "\n";
  return out.str();
}

std::string StrategyTableToCsv(const std::vector<StrategyRow>& rows,
                               const json& config) {
  std::ostringstream out;
  out << ConfigEchoLines(config) << "strategy,map,duplicate_rate,nms_calls\n";
  for (const auto& r : rows) {
    out << StrategyName(r.strategy) << "," << FormatNumber(r.map) << ","
        << FormatNumber(r.duplicate_rate) << "," << r.nms_calls << "\n";
  }
  return out.str();
}

void WriteTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

}  // namespace dualdet
