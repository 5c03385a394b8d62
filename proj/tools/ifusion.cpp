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

// ifusion: simulate / train / eval / sweep / estimate / report.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "ifusion/config.hpp"
#include "ifusion/evaluation.hpp"
#include "ifusion/missingness.hpp"
#include "ifusion/pipeline.hpp"
#include "ifusion/training.hpp"

namespace fs = std::filesystem;
using namespace ifusion;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config_path, "JSON run config");
  cmd->add_option("--set", c.overrides, "Dotted override, e.g. training.lr=2e-4")->take_all();
  cmd->add_option("--seed", c.seed, "Master seed (training.seed)");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

config::RunConfig resolve(const Common& c) {
  config::Json doc = config::Json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw ConfigError("cannot open config file " + c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        doc = config::Json::parse(text);
      } catch (const config::Json::parse_error& e) {
        throw ConfigError(c.config_path + " is not valid JSON: " + e.what());
      }
    }
  }
  for (const auto& o : c.overrides) config::apply_override(doc, o);
  if (c.seed) config::apply_override(doc, "training.seed=" + std::to_string(*c.seed));
  return config::parse_config(doc);
}

/// Checkpoint plus the run config it was trained under, with CLI overrides
/// (e.g. --seed) applied on top.
struct Loaded {
  std::unique_ptr<SentiModel> model;
  config::RunConfig run;
};

Loaded load_model(const std::string& checkpoint, const Common& c) {
  const train::Checkpoint ckpt = train::load_checkpoint(checkpoint);
  Loaded l;
  l.model = train::model_from_checkpoint(ckpt);
  config::Json doc = config::Json::parse(ckpt.run_config.empty() ? "{}" : ckpt.run_config);
  for (const auto& o : c.overrides) config::apply_override(doc, o);
  if (c.seed) config::apply_override(doc, "training.seed=" + std::to_string(*c.seed));
  l.run = config::parse_config(doc);
  return l;
}

/// Evaluation split: the archive when given, else the checkpoint's own data.
data::Dataset evaluation_split(const std::string& archive, const config::RunConfig& run, data::Split split) {
  if (!archive.empty()) return pipeline::load_split(archive, split);
  data::DatasetSplits s = pipeline::load_data(run);
  switch (split) {
    case data::Split::kTrain: return std::move(s.train);
    case data::Split::kValid: return std::move(s.valid);
    case data::Split::kTest: break;
  }
  return std::move(s.test);
}

int fail(const std::string& kind, const std::string& message) {
  config::Json j = {{"error", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integrity-aware multimodal sentiment fusion"};
  app.require_subcommand(1);

  // simulate
  Common sim;
  std::size_t sim_n = 0;
  Real sim_rate = 0.5;
  std::optional<Real> sim_intra;
  std::string sim_archive_out;
  auto* simulate = app.add_subcommand("simulate", "Draw a missing plan (and optionally write synthetic archives)");
  add_common(simulate, sim, false);
  simulate->add_option("--n", sim_n, "Number of samples (default: synthetic train size)");
  simulate->add_option("--drop-rate", sim_rate, "Inter-modality drop rate")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--intra-ratio", sim_intra, "Fixed intra-modality missing ratio")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--archive-out", sim_archive_out, "Write the configured synthetic splits as archives here");

  // train
  Common tr;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Two-stage training");
  add_common(train_cmd, tr, false);
  train_cmd->add_option("--resume", resume, "Continue from a last.ckpt");

  // eval
  Common ev;
  std::string ev_ckpt, ev_archive, ev_split = "test";
  std::optional<Real> ev_rate;
  std::optional<int> ev_mode;
  auto* eval_cmd = app.add_subcommand("eval", "Metrics under one drop rate or retention mode");
  add_common(eval_cmd, ev, true);
  eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
  eval_cmd->add_option("--archive", ev_archive, "Archive root or split directory");
  eval_cmd->add_option("--split", ev_split)->check(CLI::IsMember({"train", "valid", "test"}));
  auto* rate_opt = eval_cmd->add_option("--drop-rate", ev_rate)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--mode", ev_mode)->check(CLI::Range(0, 5))->excludes(rate_opt);

  // sweep
  Common sw;
  std::string sw_ckpt, sw_archive, sw_split = "test";
  auto* sweep_cmd = app.add_subcommand("sweep", "Drop-rate sweep 0.0..1.0 and retention modes 0..5");
  add_common(sweep_cmd, sw, true);
  sweep_cmd->add_option("--checkpoint", sw_ckpt)->required();
  sweep_cmd->add_option("--archive", sw_archive);
  sweep_cmd->add_option("--split", sw_split)->check(CLI::IsMember({"train", "valid", "test"}));

  // estimate
  Common es;
  std::string es_ckpt, es_archive, es_split = "test";
  std::optional<Real> es_rate;
  auto* estimate_cmd = app.add_subcommand("estimate", "Integrity scatter and regression statistics");
  add_common(estimate_cmd, es, true);
  estimate_cmd->add_option("--checkpoint", es_ckpt)->required();
  estimate_cmd->add_option("--archive", es_archive);
  estimate_cmd->add_option("--split", es_split)->check(CLI::IsMember({"train", "valid", "test"}));
  estimate_cmd->add_option("--drop-rate", es_rate)->check(CLI::Range(0.0, 1.0));

  // report
  Common rp;
  std::string rp_ckpt, rp_archive, rp_baseline, rp_split = "test";
  std::optional<Real> rp_rate;
  auto* report_cmd = app.add_subcommand("report", "Case filter against baseline predictions");
  add_common(report_cmd, rp, true);
  report_cmd->add_option("--checkpoint", rp_ckpt)->required();
  report_cmd->add_option("--baseline", rp_baseline, "CSV with id,prediction")->required();
  report_cmd->add_option("--archive", rp_archive);
  report_cmd->add_option("--split", rp_split)->check(CLI::IsMember({"train", "valid", "test"}));
  report_cmd->add_option("--drop-rate", rp_rate)->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what());
  }

  try {
    if (*simulate) {
      const config::RunConfig run = resolve(sim);
      if (!sim_archive_out.empty()) {
        if (run.data.kind != config::DataSource::Kind::kSynthetic) {
          throw ConfigError("--archive-out needs a synthetic data source");
        }
        data::write_archive_splits(pipeline::load_data(run), sim_archive_out);
        pipeline::write_resolved_config(run, sim_archive_out);
      }
      if (!sim.out.empty()) {
        PerModality<Eigen::Index> steps{};
        if (run.data.kind == config::DataSource::Kind::kArchive) {
          const data::Dataset train = pipeline::load_split(run.data.archive, data::Split::kTrain);
          for (Modality m : kAllModalities) steps[index_of(m)] = train.dims()[index_of(m)].steps;
          if (sim_n == 0) sim_n = train.size();
        } else {
          for (Modality m : kAllModalities) steps[index_of(m)] = run.data.synthetic.dims[index_of(m)].steps;
          if (sim_n == 0) sim_n = run.data.synthetic.n_train;
        }
        missing::MissingnessOptions o;
        o.drop_rate = sim_rate;
        o.fixed_intra_ratio = sim_intra;
        const auto plan = missing::sample_missing_plan(sim_n, steps, o, run.training.seed);
        const fs::path out(sim.out);
        eval::write_text(out, missing::plan_to_json(plan));
        pipeline::write_resolved_config(run, out.has_parent_path() ? out.parent_path() : fs::path("."));
      }
      if (sim.out.empty() && sim_archive_out.empty()) throw ConfigError("simulate needs --out and/or --archive-out");
    } else if (*train_cmd) {
      config::RunConfig run = resolve(tr);
      if (!tr.out.empty()) run.output_dir = tr.out;
      const auto splits = pipeline::load_data(run);
      const auto result = pipeline::run_training(
          run, splits, run.output_dir, resume.empty() ? std::nullopt : std::optional<fs::path>(resume));
      config::Json summary = {{"epochs_run", result.log.size()},
                              {"early_stopped", result.early_stopped},
                              {"output_dir", run.output_dir},
                              {"config_hash", config::hex64(run.hash())}};
      if (result.best.has_best) summary["best_valid_mae"] = result.best.best_valid_mae;
      std::cout << summary.dump() << std::endl;
    } else if (*eval_cmd) {
      Loaded l = load_model(ev_ckpt, ev);
      const data::Dataset split = evaluation_split(ev_archive, l.run, data::parse_split(ev_split));
      const fs::path out(ev.out);
      missing::MissingPlan plan;
      std::string label;
      if (ev_mode) {
        PerModality<Eigen::Index> steps{};
        for (Modality m : kAllModalities) steps[index_of(m)] = split.dims()[index_of(m)].steps;
        plan = missing::mode_plan(*ev_mode, split.size(), steps);
        label = "mode" + std::to_string(*ev_mode);
      } else {
        const Real rate = ev_rate.value_or(l.run.evaluation.drop_rate);
        plan = pipeline::evaluation_plan(split, rate, l.run.training.seed);
        label = std::string(data::split_name(split.split()));
      }
      const auto p = eval::predict(*l.model, split, plan, l.run.training.batch_size);
      const auto m = eval::compute_metrics(p.predicted, p.labels, l.run.evaluation.f1);
      eval::write_text(out / "metrics.csv", eval::metrics_csv({{label, m}}));
      eval::write_text(out / "predictions.csv", eval::predictions_csv(p));
      eval::write_text(out / "plan.json", missing::plan_to_json(plan));
      pipeline::write_resolved_config(l.run, out);
    } else if (*sweep_cmd) {
      Loaded l = load_model(sw_ckpt, sw);
      const data::Dataset split = evaluation_split(sw_archive, l.run, data::parse_split(sw_split));
      const fs::path out(sw.out);
      const auto rows = eval::sweep_drop_rates(*l.model, split, l.run.training.seed, l.run.training.batch_size,
                                               l.run.evaluation.f1);
      eval::write_sweep_outputs(rows, out);
      const auto modes = eval::mode_evaluation(*l.model, split, l.run.training.batch_size, l.run.evaluation.f1);
      eval::write_text(out / "modes.csv", eval::modes_csv(modes));
      pipeline::write_resolved_config(l.run, out);
    } else if (*estimate_cmd) {
      Loaded l = load_model(es_ckpt, es);
      const data::Dataset split = evaluation_split(es_archive, l.run, data::parse_split(es_split));
      const auto plan =
          pipeline::evaluation_plan(split, es_rate.value_or(l.run.evaluation.drop_rate), l.run.training.seed);
      const auto report = eval::integrity_scatter_report(*l.model, split, plan, l.run.training.batch_size);
      const fs::path out(es.out);
      const fs::path dir = out.extension() == ".csv" ? (out.has_parent_path() ? out.parent_path() : ".") : out;
      std::string rows = "id,modality,true_integrity,predicted_integrity\n";
      for (Modality m : kAllModalities) {
        const auto c = static_cast<Eigen::Index>(index_of(m));
        for (std::size_t i = 0; i < report.points.ids.size(); ++i) {
          const auto r = static_cast<Eigen::Index>(i);
          rows += report.points.ids[i] + "," + std::string(short_name(m)) + "," +
                  eval::format_value(report.points.integrity_true(r, c)) + "," +
                  eval::format_value(report.points.integrity_predicted(r, c)) + "\n";
        }
      }
      eval::write_text(out.extension() == ".csv" ? out : out / "scatter.csv", rows);
      eval::write_scatter_outputs(report, dir);
      pipeline::write_resolved_config(l.run, dir);
      std::cout << eval::scatter_stats_csv(report);
    } else if (*report_cmd) {
      Loaded l = load_model(rp_ckpt, rp);
      const data::Dataset split = evaluation_split(rp_archive, l.run, data::parse_split(rp_split));
      const auto plan =
          pipeline::evaluation_plan(split, rp_rate.value_or(l.run.evaluation.drop_rate), l.run.training.seed);
      const auto p = eval::predict(*l.model, split, plan, l.run.training.batch_size);
      const Vector base = eval::read_prediction_csv(rp_baseline, p.ids);
      const auto ids = eval::case_filter(p.ids, p.predicted, base, p.labels, l.run.evaluation.case_own_tol,
                                         l.run.evaluation.case_base_tol);
      std::string rows = "id,label,ours,baseline\n";
      std::size_t next = 0;
      for (std::size_t i = 0; i < p.ids.size() && next < ids.size(); ++i) {
        if (p.ids[i] != ids[next]) continue;
        const auto r = static_cast<Eigen::Index>(i);
        rows += p.ids[i] + "," + eval::format_value(p.labels(r)) + "," + eval::format_value(p.predicted(r)) + "," +
                eval::format_value(base(r)) + "\n";
        ++next;
      }
      const fs::path out(rp.out);
      eval::write_text(out / "cases.csv", rows);
      eval::write_text(out / "predictions.csv", eval::predictions_csv(p));
      pipeline::write_resolved_config(l.run, out);
      std::cout << ids.size() << " cases selected\n";
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}
