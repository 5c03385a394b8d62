// Copyright 2026 The ifusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ifusion/data.hpp"
#include "ifusion/missingness.hpp"
#include "ifusion/model.hpp"

namespace ifusion::eval {

enum class F1Mode { kBinary, kWeighted };

std::string_view f1_mode_name(F1Mode m);
F1Mode parse_f1_mode(std::string_view name);

/// Acc-2 and F1 are undefined (nullopt) when no label is nonzero.
struct MetricReport {
  Real mae = 0.0;
  Real acc7 = 0.0;
  Real acc5 = 0.0;
  std::optional<Real> acc2_nonzero;
  std::optional<Real> f1_nonzero;
  std::size_t count = 0;
  std::size_t nonzero_count = 0;

  bool all_finite() const;
};

/// Clamp to [-bound, bound], then round half away from zero. NaN throws.
int sentiment_class(Real score, int bound);

MetricReport compute_metrics(const Vector& predictions, const Vector& labels, F1Mode f1 = F1Mode::kBinary);

struct Predictions {
  std::vector<std::string> ids;
  Vector predicted;
  Vector labels;
  Matrix integrity_predicted;  // raw estimator output, [N x 3]
  Matrix integrity_true;       // [N x 3]
  std::vector<Modality> dominants;  // per batch, in order

  bool all_finite() const;
};

/// Evaluation-mode forward passes over the dataset in order, batches of
/// `batch_size`. With `integrity_only` the predictor is skipped and
/// `predicted` stays empty.
Predictions predict(SentiModel& model, const data::Dataset& dataset, const missing::MissingPlan& plan,
                    std::size_t batch_size, bool integrity_only = false);

/// Seed of the plan used for sweep entry `index` (rate index / 10).
std::uint64_t sweep_seed(std::uint64_t seed, int index);
std::vector<Real> sweep_rates();

struct SweepRow {
  Real drop_rate = 0.0;
  MetricReport metrics;
};

std::vector<SweepRow> sweep_drop_rates(SentiModel& model, const data::Dataset& dataset, std::uint64_t seed,
                                       std::size_t batch_size, F1Mode f1 = F1Mode::kBinary);

struct ModeRow {
  int mode = 0;
  PerModality<bool> retained{};
  MetricReport metrics;
  bool finite = true;
};

std::vector<ModeRow> mode_evaluation(SentiModel& model, const data::Dataset& dataset, std::size_t batch_size,
                                     F1Mode f1 = F1Mode::kBinary);

/// OLS fit y = slope * x + intercept. Every statistic is undefined when x
/// is constant; R^2 is also undefined when y is constant.
struct RegressionStats {
  std::optional<Real> r2;
  std::optional<Real> slope;
  std::optional<Real> intercept;
  std::size_t count = 0;
};

RegressionStats ols_fit(const Vector& x, const Vector& y);

struct ScatterReport {
  PerModality<RegressionStats> stats;
  Predictions points;
};

/// Regresses predicted on true integrity per modality under `plan`.
ScatterReport integrity_scatter_report(SentiModel& model, const data::Dataset& dataset,
                                       const missing::MissingPlan& plan, std::size_t batch_size);

/// Ids where |ours - y| < own_tol and |base - y| > base_tol.
std::vector<std::string> case_filter(const std::vector<std::string>& ids, const Vector& ours, const Vector& base,
                                     const Vector& labels, Real own_tol = 0.25, Real base_tol = 1.0);

// Report writers. Numbers use a fixed format so reruns produce equal bytes;
// undefined values are written as "undefined".
std::string format_value(const std::optional<Real>& v);
std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string modes_csv(const std::vector<ModeRow>& rows);
std::string scatter_csv(const ScatterReport& report, Modality m);
std::string scatter_stats_csv(const ScatterReport& report);
std::string predictions_csv(const Predictions& p);
/// Line plot of one sweep metric against drop rate.
std::string sweep_svg(const std::vector<SweepRow>& rows, std::string_view metric);

void write_text(const std::filesystem::path& path, const std::string& text);
/// sweep.csv plus sweep_{mae,acc5,f1}.svg.
void write_sweep_outputs(const std::vector<SweepRow>& rows, const std::filesystem::path& dir);
/// scatter_{l,a,v}.csv plus scatter_stats.csv.
void write_scatter_outputs(const ScatterReport& report, const std::filesystem::path& dir);

/// Reads a prediction CSV (header required) aligned to `ids`: the column
/// named "prediction", else the second column.
Vector read_prediction_csv(const std::filesystem::path& path, const std::vector<std::string>& ids);

}  // namespace ifusion::eval
