// SPDX-License-Identifier: Apache-2.0
#include "mdal/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mdal/engine.hpp"
#include "mdal/errors.hpp"
#include "mdal/results.hpp"

namespace mdal::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("MDALBENCH_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t pos = 0;
    const auto s = std::stoull(v, &pos);
    if (pos != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ValidationError(std::string("MDALBENCH_SEED: not an unsigned integer: ") + v);
  }
}

}  // namespace

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  PreparedData data;
  try {
    if (!fs::exists(opts.config)) {
      err << "error: config file not found: " << opts.config.string() << '\n';
      return kInvalidInput;
    }
    json doc = read_json_file(opts.config);
    const bool has_seeds = doc.is_object() && doc.contains("seeds");
    config = experiment_config_from_json(doc);
    if (!config.dataset.manifest.empty() && fs::path(config.dataset.manifest).is_relative()) {
      config.dataset.manifest = (opts.config.parent_path() / config.dataset.manifest).string();
    }
    if (opts.seeds) {
      config.seeds = *opts.seeds;
    } else if (!has_seeds) {
      if (auto s = env_seed()) config.seeds = {*s};
    }
    if (opts.strategies) config.strategies = *opts.strategies;
    config.validate();
    data = prepare_data(config.dataset);
    model_config_for(config.model, data).validate();
  } catch (const Error& e) {
    err << "error: invalid input: " << e.what() << '\n';
    return kInvalidInput;
  }

  std::vector<GridJob> jobs;
  for (const std::string& s : config.strategies) {
    for (std::uint64_t seed : config.seeds) jobs.push_back({parse_strategy(s), seed});
  }

  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) {
    err << "error: cannot create " << opts.out_dir.string() << ": " << ec.message() << '\n';
    return kRuntimeFailure;
  }
  if (!opts.force) {
    std::vector<std::string> existing;
    for (const GridJob& j : jobs) {
      const std::string stem = run_stem(data.name, std::string(strategy_name(j.strategy)), j.seed);
      for (const char* ext : {".csv", ".json"}) {
        if (fs::exists(opts.out_dir / (stem + ext))) existing.push_back(stem + ext);
      }
    }
    if (!existing.empty()) {
      err << "refusing to overwrite " << existing.size() << " existing run file(s) in "
          << opts.out_dir.string() << " (first: " << existing.front()
          << "); pass --force to replace them\n";
      return kRefusedOverwrite;
    }
  }

  std::vector<std::string> failures;
  auto write = [&](const RunResult& run) {
    const std::string stem = run_stem(data.name, run.strategy, run.seed);
    try {
      write_run_csv(run.records, data.train.size(), opts.out_dir / (stem + ".csv"));
      std::ofstream meta(opts.out_dir / (stem + ".json"));
      meta << run_metadata(config, data, run).dump(2) << '\n';
      if (!meta) throw ValidationError("write failed for " + stem + ".json");
    } catch (const std::exception& e) {
      failures.push_back(stem + ": " + e.what());
      return;
    }
    if (run.error) {
      failures.push_back(stem + ": " + *run.error);
    } else {
      out << "done " << stem << "  AULC=" << compute_aulc(run.records) << '\n';
    }
  };
  run_grid(config, data, jobs, opts.jobs, write);

  if (!failures.empty()) {
    err << failures.size() << " of " << jobs.size() << " run(s) failed:\n";
    for (const auto& f : failures) err << "  " << f << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_dir, std::ostream& out,
              std::ostream& err) {
  SyntheticSpec spec;
  try {
    const json doc = read_json_file(spec_path);
    // reuse the strict config reader through a minimal wrapper document
    ExperimentConfig c = experiment_config_from_json({{"dataset", {{"synthetic", doc}}}});
    spec = *c.dataset.synthetic;
  } catch (const Error& e) {
    err << "error: invalid input: " << e.what() << '\n';
    return kInvalidInput;
  }
  try {
    fs::create_directories(out_dir);
    const auto domains = generate_synthetic(spec);
    DatasetManifest manifest;
    manifest.name = spec.name;
    manifest.dim = spec.input_dim;
    for (const DomainDataset& d : domains) {
      const std::string file = d.name + ".csv";
      write_domain_csv(d, out_dir / file);
      manifest.domains.push_back({d.name, file, d.num_classes});
    }
    save_manifest(manifest, out_dir / "manifest.json");
    out << "wrote " << domains.size() << " domain file(s) and manifest.json to "
        << out_dir.string() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}

int cmd_report(const fs::path& dir, const std::string& format, std::ostream& out,
               std::ostream& err) {
  if (format != "text" && format != "csv") {
    err << "error: --format must be 'text' or 'csv'\n";
    return kInvalidInput;
  }
  std::vector<StoredRun> runs;
  try {
    runs = load_runs(dir);
  } catch (const Error& e) {
    err << "error: invalid input: " << e.what() << '\n';
    return kInvalidInput;
  }
  const ReportTable table = build_report(runs);
  if (table.cells.empty()) {
    err << "error: no completed runs in " << dir.string() << '\n';
    return kInvalidInput;
  }
  for (const StoredRun& r : runs) {
    if (!r.ok) err << "warning: skipping failed run " << r.metadata_path.filename().string() << '\n';
  }
  out << (format == "csv" ? report_csv(table) : report_text(table));
  return kOk;
}

int cmd_curves(const fs::path& dir, std::ostream& out, std::ostream& err) {
  std::vector<StrategyCurve> curves;
  try {
    curves = build_curves(load_runs(dir));
  } catch (const Error& e) {
    err << "error: invalid input: " << e.what() << '\n';
    return kInvalidInput;
  }
  if (curves.empty()) {
    err << "error: no completed runs in " << dir.string() << '\n';
    return kInvalidInput;
  }
  try {
    const fs::path target = dir / "curves";
    fs::create_directories(target);
    std::map<std::string, std::vector<const StrategyCurve*>> by_dataset;
    for (const StrategyCurve& c : curves) {
      std::ofstream(target / (c.dataset + "__" + c.strategy + ".csv"), std::ios::binary)
          << curve_csv(c);
      by_dataset[c.dataset].push_back(&c);
    }
    for (const auto& [dataset, list] : by_dataset) {
      std::ofstream(target / (dataset + ".svg"), std::ios::binary) << curves_svg(dataset, list);
    }
    out << "wrote " << curves.size() << " curve file(s) and " << by_dataset.size()
        << " plot(s) to " << target.string() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain active learning benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunOptions run;
  std::string seeds_arg;
  std::string strategies_arg;
  auto* run_cmd = app.add_subcommand("run", "run the (strategy x seed) experiment grid");
  run_cmd->add_option("--config", run.config, "experiment config (JSON)")->required();
  run_cmd->add_option("--out", run.out_dir, "output directory")->required();
  run_cmd->add_option("--seeds", seeds_arg, "comma-separated seeds (overrides the config)");
  run_cmd->add_option("--strategies", strategies_arg, "comma-separated strategy names");
  run_cmd->add_option("--jobs", run.jobs, "parallel runs")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--force", run.force, "overwrite existing run files");

  fs::path synth_spec;
  fs::path synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multi-domain dataset");
  synth_cmd->add_option("--spec", synth_spec, "synthetic spec (JSON)")->required();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  fs::path report_dir;
  std::string report_format = "text";
  auto* report_cmd = app.add_subcommand("report", "AULC table over a results directory");
  report_cmd->add_option("dir", report_dir, "results directory")->required();
  report_cmd->add_option("--format", report_format, "csv or text");

  fs::path curves_dir;
  auto* curves_cmd = app.add_subcommand("curves", "mean learning curves and SVG plots");
  curves_cmd->add_option("dir", curves_dir, "results directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidInput;
  }

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  };

  if (*run_cmd) {
    if (!seeds_arg.empty()) {
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split(seeds_arg)) {
        try {
          std::size_t pos = 0;
          seeds.push_back(std::stoull(s, &pos));
          if (pos != s.size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
          std::cerr << "error: --seeds: '" << s << "' is not an unsigned integer\n";
          return kInvalidInput;
        }
      }
      run.seeds = seeds;
    }
    if (!strategies_arg.empty()) run.strategies = split(strategies_arg);
    return cmd_run(run, std::cout, std::cerr);
  }
  if (*synth_cmd) return cmd_synth(synth_spec, synth_out, std::cout, std::cerr);
  if (*report_cmd) return cmd_report(report_dir, report_format, std::cout, std::cerr);
  if (*curves_cmd) return cmd_curves(curves_dir, std::cout, std::cerr);
  return kInvalidInput;
}

}  // namespace mdal::cli
