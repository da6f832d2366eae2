#include <gtest/gtest.h>

#include "dualdet/error.h"
#include "dualdet/report.h"

namespace dualdet {
namespace {

TEST(FormatNumber, TenSignificantDigits) {
  EXPECT_EQ(FormatNumber(0.5), "0.5");
  EXPECT_EQ(FormatNumber(1.0 / 3.0), "0.3333333333");
  EXPECT_EQ(FormatNumber(0.0), "0");
  EXPECT_EQ(FormatNumber(1e-12), "1e-12");
}

TEST(ConfigEchoLines, OneLinePerKey) {
  const nlohmann::json cfg = {{"seed", 3}, {"mode", "semi"}, {"tau", 0.7}};
  EXPECT_EQ(ConfigEchoLines(cfg), "# mode=semi\n# seed=3\n# tau=0.7\n");
  EXPECT_EQ(ConfigEchoLines(nlohmann::json()), "");
}

TEST(Metrics, CsvAndJsonLayout) {
  MetricsReport r;
  r.map = 0.5;
  r.ap50 = 0.75;
  r.ap75 = 0.25;
  r.ar_large = std::nullopt;
  r.prf = {{0.8, 1.0, 0.5, 2.0 / 3.0}, {0.9, 0.5, 0.25, 1.0 / 3.0}};
  const MetricsOutput m = ToMetricsOutput(r, true);
  const std::string csv = MetricsToCsv(m, {{"seed", 1}});
  EXPECT_EQ(csv,
            "# seed=1\n"
            "map,ap50,ap75,ar_large,p_80,r_80,f1_80,p_90,r_90,f1_90\n"
            "0.5,0.75,0.25,,1,0.5,0.6666666667,0.5,0.25,0.3333333333\n");
  const nlohmann::json j = MetricsToJson(m, {{"seed", 1}});
  EXPECT_TRUE(j.at("ar_large").is_null());
  EXPECT_EQ(j.at("map"), 0.5);
  EXPECT_EQ(j.at("f1_80"), 2.0 / 3.0);
  EXPECT_EQ(j.at("config").at("seed"), 1);
}

TEST(Metrics, NoPredictionsLeavesApAbsent) {
  MetricsReport r;
  r.prf = {{0.8, 0.0, 0.0, 0.0}, {0.9, 0.0, 0.0, 0.0}};
  const MetricsOutput m = ToMetricsOutput(r, false);
  EXPECT_FALSE(m.map.has_value());
  const nlohmann::json j = MetricsToJson(m, {});
  EXPECT_TRUE(j.at("map").is_null());
  EXPECT_EQ(j.at("p_80"), 0.0);
}

TEST(History, CsvRows) {
  TrainHistory h;
  h.epochs.push_back({0, 1.5, 0.0, 0.0, 0.0, std::nullopt, std::nullopt});
  h.epochs.push_back({1, 1.25, 0.5, 2.0, 0.1, 0.3, 1.0});
  EXPECT_EQ(HistoryToCsv(h, {}),
            "epoch,sup_loss,unsup_loss,pseudo_per_iter,kept_ratio,eval_map,duplicate_rate\n"
            "0,1.5,0,0,0,,\n"
            "1,1.25,0.5,2,0.1,0.3,1\n");
  const nlohmann::json j = HistoryToJson(h, {});
  ASSERT_EQ(j.at("epochs").size(), 2u);
  EXPECT_TRUE(j.at("epochs")[0].at("eval_map").is_null());
}

TEST(Sweeps, CsvRows) {
  EXPECT_EQ(ThresholdSweepToCsv({{0.7, 0.5, 1.25}}, {}), "tau,map,pseudo_per_iter\n0.7,0.5,1.25\n");
  EXPECT_EQ(QuerySweepToCsv({{30, 400, 0.25}}, {}), "n,t,map\n30,400,0.25\n");
  StrategyRow row;
  row.strategy = Strategy::kO2MOnly;
  row.map = 0.5;
  row.duplicate_rate = 3.0;
  row.nms_calls = 12;
  row.wall_seconds = 9.0;
  EXPECT_EQ(StrategyTableToCsv({row}, {}), "strategy,map,duplicate_rate,nms_calls\no2m+nms,0.5,3,12\n");
}

TEST(WriteTextFile, UnwritablePathThrows) {
  try {
    WriteTextFile("/nonexistent/dir/file.txt", "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

}  // namespace
}  // namespace dualdet
