#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "epf/dataset/csv_loader.hpp"
#include "epf/pipeline/backtest.hpp"
#include "epf/pipeline/config.hpp"
#include "epf/pipeline/gridsearch.hpp"
#include "epf/pipeline/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCellFailures = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string hours;
  std::string levels;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "configuration file (INI)");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "master seed (data, boosting, bootstrap)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--hours", o.hours, "comma-separated delivery hours");
  cmd->add_option("--levels", o.levels, "comma-separated target coverage levels");
}

epf::RunConfig resolve_config(const CommonOptions& o) {
  epf::RunConfig cfg;
  if (!o.config.empty()) {
    cfg = epf::load_run_config(o.config);
  }
  if (o.seed) epf::set_master_seed(cfg, *o.seed);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.hours.empty()) cfg.hours = epf::detail::parse_list<int>("--hours", o.hours);
  if (!o.levels.empty()) cfg.levels = epf::detail::parse_list<double>("--levels", o.levels);
  cfg.validate();
  return cfg;
}

int run_backtest_cmd(const CommonOptions& o) {
  epf::RunConfig cfg;
  epf::PreparedData data;
  try {
    cfg = resolve_config(o);
    data = epf::prepare_data(cfg);
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
  const auto res = epf::run_backtest(cfg, data);
  epf::write_backtest_outputs(cfg, res);
  std::cout << "run " << res.run_id << ": " << res.rows.size() << " result rows, " << res.failures.size()
            << " failed cells, " << res.hygiene_violations << " hygiene violations\n";
  std::cout << "outputs written to " << cfg.out_dir.string() << '\n';
  if (!res.failures.empty()) {
    std::cerr << "cell failures:\n";
    for (const auto& f : res.failures) std::cerr << "  " << f.key.label() << ": " << f.message << '\n';
    return kExitCellFailures;
  }
  return kExitOk;
}

int run_gridsearch_cmd(const CommonOptions& o) {
  epf::RunConfig cfg;
  epf::PreparedData data;
  try {
    cfg = resolve_config(o);
    data = epf::prepare_data(cfg);
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
  const auto rep = epf::grid_search(cfg, data);
  const auto j = epf::selection_to_json(rep);
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir / "selection.json");
  if (!out) throw epf::Error("cannot write selection.json");
  out << j.dump(2) << '\n';
  for (const auto& m : rep.models)
    std::cout << m.model << ": " << m.candidates[m.selected].params.dump() << " (validation pinball "
              << m.candidates[m.selected].score << ")\n";
  return kExitOk;
}

int run_synth_cmd(const CommonOptions& o) {
  epf::RunConfig cfg;
  try {
    cfg = resolve_config(o);
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }
  const auto panel = epf::generate_synthetic(cfg.synthetic);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = cfg.out_dir / "prices.csv";
  std::ofstream out(path);
  if (!out) throw epf::Error("cannot write " + path.string());
  epf::write_prices_csv(out, panel);
  std::cout << "wrote " << panel.n_days() << " days x " << panel.n_hours() << " hours to " << path.string() << '\n';
  return kExitOk;
}

int run_report_cmd(const std::string& results, const std::string& out_dir, const std::string& format,
                   bool plot_data) {
  std::ifstream in(results);
  if (!in) {
    std::cerr << "cannot open " << results << '\n';
    return kExitConfig;
  }
  const auto rows = epf::read_results_csv(in);
  const auto fmt = format == "json" ? epf::ReportFormat::Json : epf::ReportFormat::Csv;
  const auto files = epf::emit_report(rows, out_dir, fmt, plot_data);
  for (const auto& f : files) std::cout << f.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online conformal prediction intervals for day-ahead electricity prices"};
  app.require_subcommand(1);

  CommonOptions bt, gs, sy;
  add_common(app.add_subcommand("backtest", "run the rolling backtest"), bt, true);
  add_common(app.add_subcommand("gridsearch", "select base-model hyperparameters on validation pinball"), gs, true);
  add_common(app.add_subcommand("synth", "write a synthetic price panel as CSV"), sy, false);

  std::string results, report_out = "report", format = "csv";
  bool plot_data = false;
  auto* rp = app.add_subcommand("report", "re-emit a results table, optionally with plot data");
  rp->add_option("--results", results, "results.csv from a backtest")->required();
  rp->add_option("--out", report_out, "output directory");
  rp->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  rp->add_flag("--plot-data", plot_data, "write coverage/width-vs-target series");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand("backtest")) return run_backtest_cmd(bt);
    if (app.got_subcommand("gridsearch")) return run_gridsearch_cmd(gs);
    if (app.got_subcommand("synth")) return run_synth_cmd(sy);
    return run_report_cmd(results, report_out, format, plot_data);
  } catch (const epf::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
