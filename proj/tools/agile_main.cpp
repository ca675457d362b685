// Batch front door: scenario execution, ablation grids, few-shot fits, and
// trace reports. Exit codes: 0 success, 1 error, 2 task failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "agile/metrics.hpp"
#include "agile/parallel.hpp"
#include "agile/perception.hpp"
#include "agile/primitives.hpp"
#include "agile/rng.hpp"
#include "agile/runtime.hpp"
#include "agile/scenario.hpp"

namespace fs = std::filesystem;
using namespace agile;

namespace {

struct TooFewSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOpts {
  std::string out_dir = "out";
  std::int64_t seed = -1;  // <0: keep scenario seeds
  bool quiet = false;
};

void say(const GlobalOpts& g, const std::string& line) {
  if (!g.quiet) std::cout << line << '\n';
}

scenario::Scenario load_with_overrides(const std::string& path, const GlobalOpts& g) {
  scenario::Scenario sc = scenario::load_scenario(path);
  if (g.seed >= 0) sc.seed = static_cast<std::uint64_t>(g.seed);
  return sc;
}

int cmd_run(const std::string& scenario_path, const GlobalOpts& g) {
  scenario::Scenario sc = load_with_overrides(scenario_path, g);
  scenario::PipelineResult result;
  try {
    result = scenario::run_scenario(sc);
  } catch (const primitives::InfeasibleFlip& e) {
    std::cerr << "task failure: " << e.what() << '\n';
    return 2;
  } catch (const primitives::UnreachableWaypoint& e) {
    std::cerr << "task failure: " << e.what() << '\n';
    return 2;
  }
  fs::create_directories(g.out_dir);
  std::string trace_path = (fs::path(g.out_dir) / "trace.txt").string();
  std::string report_path = (fs::path(g.out_dir) / "report.txt").string();
  result.trace.save(trace_path);
  result.report.save(report_path);
  say(g, result.report.to_text() + "trace=" + trace_path);
  return result.report.success ? 0 : 2;
}

// One cell of the ablation grid.
struct AblationRun {
  std::string variant;
  std::string scenario_path;
  std::uint64_t seed = 0;
  bool ran = false;  // produced a trace (planning can fail honestly)
  bool success = false;
  double jitter_mm = 0.0;
  double singularity_pct = 0.0;
  std::string error;
};

void apply_variant(scenario::Scenario& sc, const std::string& variant) {
  sc.mode = runtime::Mode::Async;
  sc.anchor_strategy = scenario::AnchorStrategy::Implicit;
  sc.flip_strategy = scenario::FlipStrategy::Pivot;
  if (variant == "Sync")
    sc.mode = runtime::Mode::Sync;
  else if (variant == "GlobalCentroid")
    sc.anchor_strategy = scenario::AnchorStrategy::GlobalCentroid;
  else if (variant == "Direct")
    sc.flip_strategy = scenario::FlipStrategy::Direct;
}

int cmd_ablate(const std::string& suite_path, int seeds_per, const GlobalOpts& g) {
  std::ifstream in(suite_path);
  if (!in) throw std::runtime_error("cannot read suite: " + suite_path);
  std::vector<std::string> scenarios;
  std::string line;
  fs::path suite_dir = fs::path(suite_path).parent_path();
  while (std::getline(in, line)) {
    std::string t = line;
    t.erase(0, t.find_first_not_of(" \t\r"));
    if (t.empty() || t[0] == '#') continue;
    while (!t.empty() && (t.back() == '\r' || t.back() == ' ' || t.back() == '\t')) t.pop_back();
    fs::path p(t);
    scenarios.push_back(p.is_relative() ? (suite_dir / p).string() : p.string());
  }
  if (scenarios.empty()) throw std::runtime_error("suite lists no scenarios: " + suite_path);

  const std::vector<std::string> variants = {"Sync", "GlobalCentroid", "Direct", "Full"};
  std::vector<AblationRun> runs;
  for (const auto& variant : variants)
    for (const auto& path : scenarios)
      for (int k = 0; k < seeds_per; ++k) {
        AblationRun r;
        r.variant = variant;
        r.scenario_path = path;
        runs.push_back(r);
      }

  // Fan out; every slot is written exactly once, failures stay in their cell.
  par::for_index(runs.size(), [&](std::size_t i) {
    AblationRun& r = runs[i];
    try {
      scenario::Scenario sc = load_with_overrides(r.scenario_path, g);
      apply_variant(sc, r.variant);
      std::size_t k = i % static_cast<std::size_t>(seeds_per);
      sc.seed += k;
      r.seed = sc.seed;
      scenario::PipelineResult result = scenario::run_scenario(sc);
      r.ran = true;
      r.success = result.report.success;
      r.jitter_mm = result.report.tcp_jitter_mm;
      r.singularity_pct = result.report.singularity_rate_pct;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  });

  fs::create_directories(g.out_dir);
  std::ofstream detail((fs::path(g.out_dir) / "ablation_runs.csv").string());
  detail << "variant,scenario,seed,ran,success,jitter_mm,singularity_pct,error\n";
  for (const auto& r : runs) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    detail << r.variant << ',' << fs::path(r.scenario_path).filename().string() << ',' << r.seed
           << ',' << (r.ran ? 1 : 0) << ',' << (r.success ? 1 : 0) << ','
           << format_full(r.jitter_mm) << ',' << format_full(r.singularity_pct) << ',' << err
           << '\n';
  }

  std::ostringstream table;
  table << "variant,runs,successes,success_rate_pct,mean_jitter_mm,mean_singularity_pct,errors\n";
  for (const auto& variant : variants) {
    int total = 0, ok = 0, errors = 0, traced = 0;
    double jitter_sum = 0.0, sing_sum = 0.0;
    for (const auto& r : runs) {
      if (r.variant != variant) continue;
      ++total;
      if (!r.error.empty()) ++errors;
      if (r.ran) {
        ++traced;
        jitter_sum += r.jitter_mm;
        sing_sum += r.singularity_pct;
      }
      if (r.success) ++ok;
    }
    double sr = total ? 100.0 * ok / total : 0.0;
    table << variant << ',' << total << ',' << ok << ',' << format_full(sr) << ','
          << format_full(traced ? jitter_sum / traced : 0.0) << ','
          << format_full(traced ? sing_sum / traced : 0.0) << ',' << errors << '\n';
  }
  std::ofstream csv((fs::path(g.out_dir) / "ablation.csv").string());
  csv << table.str();
  say(g, table.str());
  return 0;
}

int cmd_adapt(const std::string& data_path, int n, const std::string& out_name,
              const std::string& eval_path, const GlobalOpts& g) {
  perception::FewShotDataset all = perception::FewShotDataset::load(data_path);
  if (static_cast<int>(all.samples.size()) < n)
    throw TooFewSamples("asked for " + std::to_string(n) + " samples, dataset has " +
                        std::to_string(all.samples.size()));

  std::vector<std::size_t> order(all.samples.size());
  std::iota(order.begin(), order.end(), 0);
  if (g.seed >= 0) {
    Rng rng(static_cast<std::uint64_t>(g.seed));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  perception::FewShotDataset train, heldout;
  for (std::size_t i = 0; i < order.size(); ++i)
    (static_cast<int>(i) < n ? train : heldout).samples.push_back(all.samples[order[i]]);

  auto t0 = std::chrono::steady_clock::now();
  perception::AnchorRegressor model = perception::fit_anchor_head(train);
  double fit_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  perception::FewShotDataset eval_set;
  if (!eval_path.empty())
    eval_set = perception::FewShotDataset::load(eval_path);
  else
    eval_set = heldout;

  fs::create_directories(g.out_dir);
  std::string model_path = (fs::path(g.out_dir) / out_name).string();
  model.save(model_path);

  std::ostringstream rep;
  rep << "n=" << n << '\n' << "fit_time_s=" << format_full(fit_s) << '\n';
  if (!eval_set.samples.empty()) {
    rep << "pixel_error_px=" << format_full(perception::pixel_error(model, eval_set)) << '\n'
        << "class_accuracy=" << format_full(perception::class_accuracy(model, eval_set)) << '\n'
        << "eval_samples=" << eval_set.samples.size() << '\n';
  }
  rep << "model=" << model_path;
  say(g, rep.str());
  std::ofstream fit_report((fs::path(g.out_dir) / "adapt_report.txt").string());
  fit_report << rep.str() << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& trace_paths, const GlobalOpts& g) {
  std::vector<std::pair<std::string, metrics::EpisodeReport>> rows;
  for (const auto& path : trace_paths) {
    runtime::EpisodeTrace trace = runtime::EpisodeTrace::load(path);
    rows.emplace_back(path, metrics::make_report(trace));
  }
  std::ostringstream out;
  for (const auto& [path, rep] : rows) {
    out << "episode " << path << '\n' << rep.to_text();
  }
  if (rows.size() > 1) {
    auto stat = [&](const char* name, auto get) {
      double mean = 0.0;
      for (const auto& [p, r] : rows) mean += get(r);
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (const auto& [p, r] : rows) var += (get(r) - mean) * (get(r) - mean);
      var /= static_cast<double>(rows.size());
      out << "mean_" << name << '=' << format_full(mean) << '\n'
          << "sd_" << name << '=' << format_full(std::sqrt(var)) << '\n';
    };
    out << "aggregate episodes=" << rows.size() << '\n';
    stat("success_rate", [](const metrics::EpisodeReport& r) { return r.success ? 1.0 : 0.0; });
    stat("tcp_jitter_mm", [](const metrics::EpisodeReport& r) { return r.tcp_jitter_mm; });
    stat("peak_jerk_m_s3", [](const metrics::EpisodeReport& r) { return r.peak_jerk_m_s3; });
    stat("singularity_rate_pct",
         [](const metrics::EpisodeReport& r) { return r.singularity_rate_pct; });
  }
  fs::create_directories(g.out_dir);
  std::ofstream file((fs::path(g.out_dir) / "report_summary.txt").string());
  file << out.str();
  say(g, out.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-constrained manipulation testbench"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--out-dir", g.out_dir, "Directory for generated files")->capture_default_str();
  app.add_option("--seed", g.seed, "Override the scenario seed (also shuffles adapt subsets)");
  app.add_flag("--quiet", g.quiet, "Suppress stdout reports");

  std::string scenario_path;
  auto* run = app.add_subcommand("run", "Execute one scenario end to end");
  run->add_option("scenario", scenario_path, "Scenario file")->required();

  std::string suite_path;
  int seeds_per = 5;
  auto* ablate = app.add_subcommand("ablate", "Run the 4-variant grid over a scenario suite");
  ablate->add_option("suite", suite_path, "File listing scenario paths")->required();
  ablate->add_option("--seeds", seeds_per, "Seeds per scenario")->capture_default_str();

  std::string data_path, eval_path, model_name = "model.txt";
  int n_samples = 5;
  auto* adapt = app.add_subcommand("adapt", "Fit the anchor head from annotated masks");
  adapt->add_option("annotations", data_path, "Annotation file")->required();
  adapt->add_option("--n", n_samples, "Training samples")->capture_default_str();
  adapt->add_option("--model-name", model_name, "Output model filename")->capture_default_str();
  adapt->add_option("--eval", eval_path, "Separate evaluation annotation file");

  std::vector<std::string> trace_paths;
  auto* report = app.add_subcommand("report", "Recompute metrics from trace files");
  report->add_option("traces", trace_paths, "Trace files")->required()->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, g);
    if (ablate->parsed()) return cmd_ablate(suite_path, seeds_per, g);
    if (adapt->parsed()) return cmd_adapt(data_path, n_samples, model_name, eval_path, g);
    if (report->parsed()) return cmd_report(trace_paths, g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
