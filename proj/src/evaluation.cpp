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

#include "ifusion/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "ifusion/random.hpp"

namespace ifusion::eval {

using Index = Eigen::Index;

std::string_view f1_mode_name(F1Mode m) { return m == F1Mode::kWeighted ? "weighted" : "binary"; }

F1Mode parse_f1_mode(std::string_view name) {
  if (name == "binary") return F1Mode::kBinary;
  if (name == "weighted") return F1Mode::kWeighted;
  throw ConfigError("unknown F1 mode '" + std::string(name) + "' (expected binary or weighted)");
}

bool MetricReport::all_finite() const {
  auto ok = [](const std::optional<Real>& v) { return !v || std::isfinite(*v); };
  return std::isfinite(mae) && std::isfinite(acc7) && std::isfinite(acc5) && ok(acc2_nonzero) && ok(f1_nonzero);
}

int sentiment_class(Real score, int bound) {
  if (std::isnan(score)) throw Error("invalid_value", "cannot bin a NaN sentiment score");
  const Real b = static_cast<Real>(bound);
  return static_cast<int>(round_half_away(std::clamp(score, -b, b)));
}

namespace {

Real f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  // Zero when the class is never predicted correctly.
  if (tp == 0) return 0.0;
  const Real precision = static_cast<Real>(tp) / static_cast<Real>(tp + fp);
  const Real recall = static_cast<Real>(tp) / static_cast<Real>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

MetricReport compute_metrics(const Vector& predictions, const Vector& labels, F1Mode f1) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("compute_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.size() == 0) throw ShapeError("compute_metrics needs at least one sample");

  MetricReport r;
  r.count = static_cast<std::size_t>(labels.size());
  Real abs_err = 0.0;
  std::size_t hit7 = 0, hit5 = 0, hit2 = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    const Real p = predictions(i), y = labels(i);
    abs_err += std::abs(p - y);
    hit7 += sentiment_class(p, 3) == sentiment_class(y, 3);
    hit5 += sentiment_class(p, 2) == sentiment_class(y, 2);
    if (y == 0.0) continue;
    ++r.nonzero_count;
    const bool pred_pos = p > 0.0, true_pos = y > 0.0;
    hit2 += pred_pos == true_pos;
    if (pred_pos && true_pos) ++tp;
    if (pred_pos && !true_pos) ++fp;
    if (!pred_pos && true_pos) ++fn;
    if (!pred_pos && !true_pos) ++tn;
  }
  const auto n = static_cast<Real>(r.count);
  r.mae = abs_err / n;
  r.acc7 = static_cast<Real>(hit7) / n;
  r.acc5 = static_cast<Real>(hit5) / n;
  if (r.nonzero_count > 0) {
    const auto nz = static_cast<Real>(r.nonzero_count);
    r.acc2_nonzero = static_cast<Real>(hit2) / nz;
    if (f1 == F1Mode::kBinary) {
      r.f1_nonzero = f1_score(tp, fp, fn);
    } else {
      const Real pos = f1_score(tp, fp, fn), neg = f1_score(tn, fn, fp);
      r.f1_nonzero = (static_cast<Real>(tp + fn) * pos + static_cast<Real>(tn + fp) * neg) / nz;
    }
  }
  return r;
}

bool Predictions::all_finite() const {
  return predicted.allFinite() && integrity_predicted.allFinite();
}

Predictions predict(SentiModel& model, const data::Dataset& dataset, const missing::MissingPlan& plan,
                    std::size_t batch_size, bool integrity_only) {
  if (plan.size() != dataset.size()) {
    throw ShapeError("missing plan covers " + std::to_string(plan.size()) + " samples, dataset has " +
                     std::to_string(dataset.size()));
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto n = static_cast<Index>(dataset.size());
  Predictions out;
  out.labels.resize(n);
  out.integrity_predicted.resize(n, 3);
  out.integrity_true = plan.integrity_matrix();
  if (!integrity_only) out.predicted.resize(n);
  out.ids.reserve(dataset.size());

  ag::NoGradGuard no_grad;
  const Vector unknown = model.unknown_vector();
  ForwardOptions options;
  options.integrity_only = integrity_only;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, dataset.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const data::Batch batch = data::assemble_batch(dataset, idx);
    const missing::CorruptedBatch corrupted = missing::apply_missingness(batch, plan.select(idx), unknown);
    const ModelOutputs o = model.forward(corrupted, nullptr, options);
    const auto s = static_cast<Index>(start), b = static_cast<Index>(idx.size());
    out.integrity_predicted.middleRows(s, b) = o.integrity_raw.value();
    out.labels.segment(s, b) = batch.labels;
    if (!integrity_only) {
      out.predicted.segment(s, b) = o.predictions();
      out.dominants.push_back(o.fusion.dominant);
    }
    for (std::size_t i : idx) out.ids.push_back(dataset[i].id);
  }
  return out;
}

std::uint64_t sweep_seed(std::uint64_t seed, int index) {
  return CounterRng::derive_key(seed, {CounterRng::tag("sweep"), static_cast<std::uint64_t>(index)});
}

std::vector<Real> sweep_rates() {
  std::vector<Real> rates;
  for (int i = 0; i <= 10; ++i) rates.push_back(static_cast<Real>(i) / 10.0);
  return rates;
}

namespace {

PerModality<Index> steps_of(const data::Dataset& dataset) {
  PerModality<Index> steps{};
  for (Modality m : kAllModalities) steps[index_of(m)] = dataset.dims()[index_of(m)].steps;
  return steps;
}

}  // namespace

std::vector<SweepRow> sweep_drop_rates(SentiModel& model, const data::Dataset& dataset, std::uint64_t seed,
                                       std::size_t batch_size, F1Mode f1) {
  std::vector<SweepRow> rows;
  const auto rates = sweep_rates();
  for (std::size_t i = 0; i < rates.size(); ++i) {
    missing::MissingnessOptions options;
    options.drop_rate = rates[i];
    const auto plan =
        missing::sample_missing_plan(dataset.size(), steps_of(dataset), options, sweep_seed(seed, static_cast<int>(i)));
    const Predictions p = predict(model, dataset, plan, batch_size);
    rows.push_back({rates[i], compute_metrics(p.predicted, p.labels, f1)});
  }
  return rows;
}

std::vector<ModeRow> mode_evaluation(SentiModel& model, const data::Dataset& dataset, std::size_t batch_size,
                                     F1Mode f1) {
  std::vector<ModeRow> rows;
  for (int mode = 0; mode < 6; ++mode) {
    const auto plan = missing::mode_plan(mode, dataset.size(), steps_of(dataset));
    const Predictions p = predict(model, dataset, plan, batch_size);
    ModeRow row;
    row.mode = mode;
    row.retained = missing::retained_modalities(mode);
    row.finite = p.all_finite();
    row.metrics = compute_metrics(p.predicted, p.labels, f1);
    rows.push_back(row);
  }
  return rows;
}

RegressionStats ols_fit(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw ShapeError("ols_fit: x and y lengths differ");
  RegressionStats s;
  s.count = static_cast<std::size_t>(x.size());
  if (x.size() < 2) return s;
  const Real mx = x.mean(), my = y.mean();
  const Real sxx = (x.array() - mx).square().sum();
  const Real syy = (y.array() - my).square().sum();
  const Real sxy = ((x.array() - mx) * (y.array() - my)).sum();
  if (sxx == 0.0) return s;
  s.slope = sxy / sxx;
  s.intercept = my - *s.slope * mx;
  if (syy > 0.0) {
    const Real ss_res = (y.array() - (*s.slope * x.array() + *s.intercept)).square().sum();
    s.r2 = 1.0 - ss_res / syy;
  }
  return s;
}

ScatterReport integrity_scatter_report(SentiModel& model, const data::Dataset& dataset,
                                       const missing::MissingPlan& plan, std::size_t batch_size) {
  ScatterReport r;
  r.points = predict(model, dataset, plan, batch_size, /*integrity_only=*/true);
  for (Modality m : kAllModalities) {
    const auto c = static_cast<Index>(index_of(m));
    r.stats[index_of(m)] = ols_fit(r.points.integrity_true.col(c), r.points.integrity_predicted.col(c));
  }
  return r;
}

std::vector<std::string> case_filter(const std::vector<std::string>& ids, const Vector& ours, const Vector& base,
                                     const Vector& labels, Real own_tol, Real base_tol) {
  const auto n = static_cast<Index>(ids.size());
  if (ours.size() != n || base.size() != n || labels.size() != n) {
    throw ShapeError("case_filter: ids, predictions and labels must be aligned");
  }
  std::vector<std::string> out;
  for (Index i = 0; i < n; ++i) {
    if (std::abs(ours(i) - labels(i)) < own_tol && std::abs(base(i) - labels(i)) > base_tol) {
      out.push_back(ids[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

std::string format_value(const std::optional<Real>& v) {
  if (!v) return "undefined";
  if (std::isnan(*v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.8f", *v);
  return buf;
}

namespace {

std::string metric_fields(const MetricReport& m) {
  return format_value(m.mae) + "," + format_value(m.acc7) + "," + format_value(m.acc5) + "," +
         format_value(m.acc2_nonzero) + "," + format_value(m.f1_nonzero) + "," + std::to_string(m.count);
}

constexpr const char* kMetricHeader = "mae,acc7,acc5,acc2_nonzero,f1_nonzero,count";

}  // namespace

std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::string out = std::string("name,") + kMetricHeader + "\n";
  for (const auto& [name, m] : rows) out += name + "," + metric_fields(m) + "\n";
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string("drop_rate,") + kMetricHeader + "\n";
  for (const auto& r : rows) {
    char rate[16];
    std::snprintf(rate, sizeof(rate), "%.1f", r.drop_rate);
    out += std::string(rate) + "," + metric_fields(r.metrics) + "\n";
  }
  return out;
}

std::string modes_csv(const std::vector<ModeRow>& rows) {
  std::string out = std::string("mode,retained,") + kMetricHeader + "\n";
  for (const auto& r : rows) {
    std::string kept;
    for (Modality m : kAllModalities) {
      if (r.retained[index_of(m)]) kept += short_name(m);
    }
    out += std::to_string(r.mode) + "," + kept + "," + metric_fields(r.metrics) + "\n";
  }
  return out;
}

std::string scatter_csv(const ScatterReport& report, Modality m) {
  const auto c = static_cast<Index>(index_of(m));
  std::string out = "id,true_integrity,predicted_integrity\n";
  for (std::size_t i = 0; i < report.points.ids.size(); ++i) {
    const auto r = static_cast<Index>(i);
    out += report.points.ids[i] + "," + format_value(report.points.integrity_true(r, c)) + "," +
           format_value(report.points.integrity_predicted(r, c)) + "\n";
  }
  return out;
}

std::string scatter_stats_csv(const ScatterReport& report) {
  std::string out = "modality,r2,slope,intercept,count\n";
  for (Modality m : kAllModalities) {
    const auto& s = report.stats[index_of(m)];
    out += std::string(short_name(m)) + "," + format_value(s.r2) + "," + format_value(s.slope) + "," +
           format_value(s.intercept) + "," + std::to_string(s.count) + "\n";
  }
  return out;
}

std::string predictions_csv(const Predictions& p) {
  std::string out = "id,label,prediction\n";
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    const auto r = static_cast<Index>(i);
    out += p.ids[i] + "," + format_value(p.labels(r)) + "," + format_value(p.predicted(r)) + "\n";
  }
  return out;
}

std::string sweep_svg(const std::vector<SweepRow>& rows, std::string_view metric) {
  std::vector<std::optional<Real>> ys;
  for (const auto& r : rows) {
    if (metric == "mae") {
      ys.emplace_back(r.metrics.mae);
    } else if (metric == "acc5") {
      ys.emplace_back(r.metrics.acc5);
    } else if (metric == "f1") {
      ys.push_back(r.metrics.f1_nonzero);
    } else {
      throw ConfigError("unknown sweep plot metric '" + std::string(metric) + "'");
    }
  }
  Real lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& y : ys) {
    if (!y || !std::isfinite(*y)) continue;
    lo = first ? *y : std::min(lo, *y);
    hi = first ? *y : std::max(hi, *y);
    first = false;
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const Real pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  constexpr int kW = 480, kH = 320, kL = 60, kR = 20, kT = 30, kB = 50;
  auto px = [&](Real x) { return kL + x * (kW - kL - kR); };
  auto py = [&](Real y) { return kT + (hi - y) / (hi - lo) * (kH - kT - kB); };
  char buf[256];
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"20\" font-size=\"14\">%s vs drop rate</text>\n", kL,
                std::string(metric).c_str());
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n"
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n",
                kL, kH - kB, kW - kR, kH - kB, kL, kT, kL, kH - kB);
  svg << buf;
  for (int i = 0; i <= 10; i += 2) {
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%d\" font-size=\"11\" text-anchor=\"middle\">%.1f</text>\n",
                  px(i / 10.0), kH - kB + 16, i / 10.0);
    svg << buf;
  }
  for (int i = 0; i <= 4; ++i) {
    const Real y = lo + (hi - lo) * i / 4.0;
    std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.3f</text>\n",
                  kL - 6, py(y) + 4, y);
    svg << buf;
  }
  svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!ys[i] || !std::isfinite(*ys[i])) continue;
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(rows[i].drop_rate), py(*ys[i]));
    svg << buf;
  }
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io_error", "failed writing " + path.string());
}

void write_sweep_outputs(const std::vector<SweepRow>& rows, const std::filesystem::path& dir) {
  write_text(dir / "sweep.csv", sweep_csv(rows));
  for (const char* metric : {"mae", "acc5", "f1"}) {
    write_text(dir / ("sweep_" + std::string(metric) + ".svg"), sweep_svg(rows, metric));
  }
}

void write_scatter_outputs(const ScatterReport& report, const std::filesystem::path& dir) {
  for (Modality m : kAllModalities) {
    write_text(dir / ("scatter_" + std::string(short_name(m)) + ".csv"), scatter_csv(report, m));
  }
  write_text(dir / "scatter_stats.csv", scatter_stats_csv(report));
}

Vector read_prediction_csv(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open prediction file " + path.string());
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t comma; (comma = line.find(',', start)) != std::string::npos; start = comma + 1) {
      cells.push_back(line.substr(start, comma - start));
    }
    cells.push_back(line.substr(start));
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path.string() + ": empty prediction file");
  // The column named "prediction", else the second one.
  const auto header = split(line);
  std::size_t column = 1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "prediction") column = c;
  }
  std::map<std::string, Real> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() <= column) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": expected at least " +
                      std::to_string(column + 1) + " columns");
    }
    const std::string& field = cells[column];
    try {
      std::size_t used = 0;
      values[cells[0]] = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": bad prediction value '" + field + "'");
    }
  }
  Vector out(static_cast<Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = values.find(ids[i]);
    if (it == values.end()) throw LoadError(path.string() + ": no prediction for sample " + ids[i]);
    out(static_cast<Index>(i)) = it->second;
  }
  return out;
}

}  // namespace ifusion::eval
