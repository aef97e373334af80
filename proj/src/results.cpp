// SPDX-License-Identifier: Apache-2.0
#include "mdal/results.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "mdal/errors.hpp"

namespace mdal {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string run_stem(const std::string& dataset, const std::string& strategy, std::uint64_t seed) {
  return dataset + "__" + strategy + "__seed" + std::to_string(seed);
}

void write_run_csv(const LearningCurve& curve, std::size_t num_domains, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "round,labeled_total,labeled_frac";
  for (std::size_t k = 0; k < num_domains; ++k) out << ",acc_domain_" << k;
  out << ",acc_macro\n";
  for (const RoundRecord& r : curve) {
    out << r.round << ',' << r.labeled_total << ',' << shortest(r.labeled_frac);
    for (double a : r.accuracy) out << ',' << shortest(a);
    out << ',' << shortest(r.macro_accuracy) << '\n';
  }
}

LearningCurve read_run_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "round" || header[1] != "labeled_total" ||
      header[2] != "labeled_frac" || header.back() != "acc_macro") {
    throw ParseError(path.string(), 1, "unexpected header '" + line + "'");
  }
  const std::size_t domains = header.size() - 4;
  LearningCurve curve;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string(), lineno, "expected " + std::to_string(header.size()) +
                                                  " columns, found " + std::to_string(cells.size()));
    }
    RoundRecord r;
    try {
      r.round = std::stoull(cells[0]);
      r.labeled_total = std::stoull(cells[1]);
      r.labeled_frac = std::stod(cells[2]);
      for (std::size_t k = 0; k < domains; ++k) r.accuracy.push_back(std::stod(cells[3 + k]));
      r.macro_accuracy = std::stod(cells.back());
    } catch (const std::exception&) {
      throw ParseError(path.string(), lineno, "malformed number");
    }
    curve.push_back(std::move(r));
  }
  return curve;
}

json run_metadata(const ExperimentConfig& config, const PreparedData& data, const RunResult& run) {
  ExperimentConfig echo = config;
  echo.strategies = {run.strategy};
  echo.seeds = {run.seed};
  json cfg = to_json(echo);
  const ModelConfig resolved = model_config_for(config.model, data);
  cfg["model"]["input_dim"] = resolved.input_dim;
  cfg["model"]["num_classes"] = resolved.num_classes;

  std::vector<double> select_s;
  std::vector<double> train_s;
  for (const RoundRecord& r : run.records) {
    select_s.push_back(r.select_seconds);
    train_s.push_back(r.train_seconds);
  }
  json domains = json::array();
  for (std::size_t k = 0; k < data.train.size(); ++k) {
    domains.push_back({{"name", data.train[k].name},
                       {"train", data.train[k].size()},
                       {"test", data.test[k].size()}});
  }
  json meta = {
      {"kind", "mdal-run"},
      {"format_version", 1},
      {"code_version", kVersion},
      {"dataset", data.name},
      {"domains", domains},
      {"strategy", run.strategy},
      {"seed", run.seed},
      {"csv", run_stem(data.name, run.strategy, run.seed) + ".csv"},
      {"status", run.error ? "failed" : "ok"},
      {"rounds", run.records.size()},
      {"selections", run.batches.size()},
      {"config", cfg},
      {"volatile",
       {{"created_at", utc_now()}, {"select_seconds", select_s}, {"train_seconds", train_s}}},
  };
  if (run.error) meta["error"] = *run.error;
  if (!run.records.empty()) meta["aulc"] = compute_aulc(run.records);
  return meta;
}

std::vector<StoredRun> load_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<StoredRun> runs;
  for (const fs::path& p : files) {
    std::ifstream in(p);
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception&) {
      continue;  // not ours
    }
    if (!meta.is_object() || meta.value("kind", "") != "mdal-run") continue;
    StoredRun r;
    r.metadata_path = p;
    try {
      r.dataset = meta.at("dataset").get<std::string>();
      r.strategy = meta.at("strategy").get<std::string>();
      r.seed = meta.at("seed").get<std::uint64_t>();
      r.ok = meta.at("status").get<std::string>() == "ok";
      r.curve = read_run_csv(dir / meta.at("csv").get<std::string>());
      if (meta.contains("volatile")) {
        r.select_seconds = meta["volatile"].value("select_seconds", std::vector<double>{});
      }
    } catch (const json::exception& e) {
      throw ValidationError(p.string() + ": " + e.what());
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

namespace {

std::vector<std::string> ordered_strategies(const std::set<std::string>& present) {
  std::vector<std::string> out;
  for (const std::string& s : strategy_names()) {
    if (present.count(s)) out.push_back(s);
  }
  for (const std::string& s : present) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

}  // namespace

ReportTable build_report(const std::vector<StoredRun>& runs) {
  ReportTable t;
  std::set<std::string> datasets;
  std::set<std::string> strategies;
  std::map<std::pair<std::string, std::string>, std::vector<double>> aulcs;
  std::map<std::string, std::pair<double, std::size_t>> timing;
  for (const StoredRun& r : runs) {
    if (!r.ok || r.curve.empty()) continue;
    datasets.insert(r.dataset);
    strategies.insert(r.strategy);
    aulcs[{r.strategy, r.dataset}].push_back(100.0 * compute_aulc(r.curve));
    // the final round never selects
    for (std::size_t i = 0; i + 1 < r.select_seconds.size(); ++i) {
      timing[r.strategy].first += r.select_seconds[i];
      timing[r.strategy].second += 1;
    }
  }
  t.datasets.assign(datasets.begin(), datasets.end());
  t.strategies = ordered_strategies(strategies);
  for (const auto& [key, values] : aulcs) {
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    t.cells[key] = {mean, std::sqrt(var / n), values.size()};
  }
  for (const auto& [s, acc] : timing) {
    t.select_seconds[s] = acc.second ? acc.first / static_cast<double>(acc.second) : 0.0;
  }
  return t;
}

std::string format_cell(const ReportCell& cell) {
  return fixed(cell.mean, 2) + "(" + fixed(cell.stddev, 2) + ")";
}

std::string report_csv(const ReportTable& t) {
  std::ostringstream os;
  os << "strategy";
  for (const auto& d : t.datasets) os << ',' << d;
  os << ",select_seconds\n";
  for (const auto& s : t.strategies) {
    os << s;
    for (const auto& d : t.datasets) {
      auto it = t.cells.find({s, d});
      os << ',' << (it == t.cells.end() ? "" : format_cell(it->second));
    }
    auto ti = t.select_seconds.find(s);
    os << ',' << (ti == t.select_seconds.end() ? "" : fixed(ti->second, 6)) << '\n';
  }
  return os.str();
}

std::string report_text(const ReportTable& t) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Strategy/Datasets"});
  for (const auto& d : t.datasets) rows[0].push_back(d);
  rows[0].push_back("select_s/round");

  std::map<std::string, double> best;
  for (const auto& d : t.datasets) {
    double b = -1.0;
    for (const auto& s : t.strategies) {
      auto it = t.cells.find({s, d});
      if (it != t.cells.end()) b = std::max(b, it->second.mean);
    }
    best[d] = b;
  }
  for (const auto& s : t.strategies) {
    std::vector<std::string> row{s};
    for (const auto& d : t.datasets) {
      auto it = t.cells.find({s, d});
      if (it == t.cells.end()) {
        row.emplace_back("-");
      } else {
        const bool top = fixed(it->second.mean, 2) == fixed(best[d], 2);
        row.push_back(format_cell(it->second) + (top ? " *" : ""));
      }
    }
    auto ti = t.select_seconds.find(s);
    row.push_back(ti == t.select_seconds.end() ? "-" : fixed(ti->second, 6));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) os << " | ";
      os << std::left << std::setw(static_cast<int>(width[c])) << r[c];
    }
    os << '\n';
  };
  emit(rows[0]);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  os << std::string(total + 3 * (width.size() - 1), '-') << '\n';
  for (std::size_t i = 1; i < rows.size(); ++i) emit(rows[i]);
  os << "(AULC x100, mean(std) over seeds; * = best per dataset)\n";
  return os.str();
}

std::vector<StrategyCurve> build_curves(const std::vector<StoredRun>& runs) {
  std::map<std::pair<std::string, std::string>, std::vector<LearningCurve>> groups;
  for (const StoredRun& r : runs) {
    if (!r.ok || r.curve.empty()) continue;
    groups[{r.dataset, r.strategy}].push_back(r.curve);
  }
  std::vector<StrategyCurve> out;
  std::set<std::string> strategies;
  for (const auto& [key, _] : groups) strategies.insert(key.second);
  const auto order = ordered_strategies(strategies);
  std::set<std::string> datasets;
  for (const auto& [key, _] : groups) datasets.insert(key.first);
  for (const auto& d : datasets) {
    for (const auto& s : order) {
      auto it = groups.find({d, s});
      if (it == groups.end()) continue;
      out.push_back({d, s, aggregate_seeds(it->second)});
    }
  }
  return out;
}

std::string curve_csv(const StrategyCurve& curve) {
  std::ostringstream os;
  os << "labeled_total,mean_acc,std_acc\n";
  for (const CurvePoint& p : curve.summary.mean_curve) {
    os << p.labeled_total << ',' << shortest(p.mean) << ',' << shortest(p.stddev) << '\n';
  }
  return os.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string curves_svg(const std::string& dataset, const std::vector<const StrategyCurve*>& curves) {
  constexpr double kW = 640, kH = 420, kLeft = 60, kRight = 150, kTop = 30, kBottom = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto* c : curves) {
    for (const CurvePoint& p : c->summary.mean_curve) {
      xmin = std::min(xmin, static_cast<double>(p.labeled_total));
      xmax = std::max(xmax, static_cast<double>(p.labeled_total));
      ymin = std::min(ymin, p.mean);
      ymax = std::max(ymax, p.mean);
    }
  }
  if (curves.empty()) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax - ymin < 1e-6) ymin -= 0.01, ymax += 0.01;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kLeft << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
     << xml_escape(dataset) << "</text>\n";
  // axes
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << kTop + ph + 16
       << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">"
       << fixed(xv, 0) << "</text>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(yv) + 3
       << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << fixed(yv, 3)
       << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">labeled instances</text>\n";
  os << "<text x=\"14\" y=\"" << kTop + ph / 2
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << kTop + ph / 2 << ")\">accuracy</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const CurvePoint& p : curves[i]->summary.mean_curve) {
      if (!first) os << ' ';
      first = false;
      os << sx(static_cast<double>(p.labeled_total)) << ',' << sy(p.mean);
    }
    os << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(i);
    os << "<line x1=\"" << kLeft + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 30
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + pw + 35 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(curves[i]->strategy)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mdal
