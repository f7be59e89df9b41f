#include "sc3/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "sc3/oracles.hpp"

namespace sc3 {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ";";
    out += fmt(v[i]);
  }
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  return out;
}

}  // namespace

Topology scenario_topology(const ScenarioConfig& cfg) {
  Rng rng = Rng::stream(cfg.experiment.master_seed, {streams::kTopology});
  return generate_topology(cfg.topology, rng);
}

SweepResult run_sweep(const ScenarioConfig& cfg, int jobs,
                      const PairingPolicy* policy) {
  const ExperimentConfig& exp = cfg.experiment;
  if (exp.schemes.empty()) throw ConfigError("run_sweep: no schemes configured");
  for (const auto& s : exp.schemes)
    if (s == "loac" && policy == nullptr)
      throw ConfigError("run_sweep: scheme loac needs a trained policy");
  std::vector<double> sweep = exp.sweep_values;
  if (sweep.empty()) sweep.push_back(exp.sweep_axis == "f_max" ? cfg.budgets.f_max
                                                               : cfg.budgets.B_max);

  const Topology base_topo = scenario_topology(cfg);
  std::vector<ChannelRealization> channels;
  channels.reserve(exp.realizations);
  for (int r = 0; r < exp.realizations; ++r) {
    Rng rng = Rng::stream(exp.master_seed,
                          {streams::kEval, static_cast<std::uint64_t>(r)});
    channels.push_back(realize_channels(base_topo, cfg.env, rng));
  }

  const std::size_t n_cells = sweep.size() * exp.realizations * exp.schemes.size();
  std::vector<ResultRecord> records(n_cells);

  const auto run_cell = [&](std::size_t idx) {
    const std::size_t per_value =
        static_cast<std::size_t>(exp.realizations) * exp.schemes.size();
    const std::size_t vi = idx / per_value;
    const std::size_t r = (idx % per_value) / exp.schemes.size();
    const std::size_t si = idx % exp.schemes.size();

    ResultRecord& rec = records[idx];
    rec.scheme = exp.schemes[si];
    rec.sweep_value = sweep[vi];
    rec.realization = static_cast<int>(r);
    rec.seed = r;

    Topology topo = base_topo;
    ResourceBudget rb = cfg.budgets;
    SolveOptions opts = cfg.solver;
    if (exp.sweep_axis == "B_max") {
      rb.B_max = sweep[vi];
    } else if (exp.sweep_axis == "f_max") {
      rb.f_max = sweep[vi];
    } else {
      for (auto& s : topo.sensors) s.sensing_rate = sweep[vi];
      opts.sensing_cap = true;
    }

    BaselineParams params;
    params.omega = exp.omega;
    params.delta = exp.delta;
    params.enum_cap = exp.enum_cap;
    params.eval_candidates = exp.eval_candidates;
    params.policy = policy;
    params.eval_seed = exp.master_seed * 1000003ull + r;

    const auto start = std::chrono::steady_clock::now();
    try {
      const BaselineResult br =
          run_baseline(rec.scheme, topo, channels[r], cfg.loop, rb, params, opts);
      rec.total_cost = br.total_cost;
      rec.feasible = br.feasible;
      for (const LoopAllocation& la : br.alloc.loops) {
        rec.d_sc3.push_back(la.D_sc3);
        rec.loop_cost.push_back(la.cost);
      }
    } catch (const Error& e) {
      rec.error = e.what();
    }
    rec.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n_cells; ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1))
          run_cell(i);
      });
    for (auto& t : pool) t.join();
  }

  SweepResult res;
  res.records = std::move(records);
  for (std::size_t si = 0; si < exp.schemes.size(); ++si)
    for (std::size_t vi = 0; vi < sweep.size(); ++vi) {
      AggregateRow row;
      row.scheme = exp.schemes[si];
      row.sweep_value = sweep[vi];
      double sum = 0.0, sum2 = 0.0;
      for (const ResultRecord& rec : res.records) {
        if (rec.scheme != row.scheme || rec.sweep_value != row.sweep_value) continue;
        ++row.count;
        if (rec.feasible && std::isfinite(rec.total_cost)) {
          ++row.feasible;
          sum += rec.total_cost;
          sum2 += rec.total_cost * rec.total_cost;
        }
      }
      if (row.feasible > 0) {
        row.mean_cost = sum / row.feasible;
        if (row.feasible > 1) {
          const double var = std::max(
              0.0, (sum2 - sum * sum / row.feasible) / (row.feasible - 1));
          row.stderr_cost = std::sqrt(var / row.feasible);
        }
      } else {
        row.mean_cost = kInfeasibleCost;
      }
      res.aggregates.push_back(std::move(row));
    }
  return res;
}

TrainOutput train_command(const ScenarioConfig& cfg, const std::string& checkpoint_text,
                          int until_epoch) {
  TrainOutput out;
  out.topology = scenario_topology(cfg);
  TrainConfig tc = cfg.train;
  std::uint64_t seed = cfg.experiment.master_seed;
  if (checkpoint_text.empty()) {
    const NormalizationRecord norm =
        make_normalization(out.topology, cfg.env, cfg.topology.gamma_range_lo,
                           cfg.topology.gamma_range_hi);
    out.state = loac_init(norm, seed, tc);
  } else {
    checkpoint_from_json(checkpoint_text, out.state, tc, seed);
  }
  const int until = until_epoch < 0 ? tc.epochs : until_epoch;
  out.records = loac_run(out.state, out.topology, cfg.env, cfg.loop, cfg.budgets, tc,
                         seed, until, cfg.solver);
  return out;
}

void write_records_csv(const std::string& path, const std::vector<ResultRecord>& records) {
  std::ofstream out = open_out(path);
  out << "scheme,sweep_value,realization,seed,feasible,total_cost,d_sc3,loop_cost,error\n";
  for (const ResultRecord& r : records)
    out << r.scheme << "," << fmt(r.sweep_value) << "," << r.realization << ","
        << r.seed << "," << (r.feasible ? 1 : 0) << "," << fmt(r.total_cost) << ","
        << join(r.d_sc3) << "," << join(r.loop_cost) << "," << sanitize(r.error)
        << "\n";
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out = open_out(path);
  out << "scheme,sweep_value,count,feasible,mean_cost,stderr_cost\n";
  for (const AggregateRow& r : rows)
    out << r.scheme << "," << fmt(r.sweep_value) << "," << r.count << ","
        << r.feasible << "," << fmt(r.mean_cost) << "," << fmt(r.stderr_cost) << "\n";
}

void write_timing_csv(const std::string& path, const std::vector<ResultRecord>& records) {
  std::ofstream out = open_out(path);
  out << "scheme,sweep_value,realization,solve_seconds\n";
  for (const ResultRecord& r : records)
    out << r.scheme << "," << fmt(r.sweep_value) << "," << r.realization << ","
        << fmt(r.solve_seconds) << "\n";
}

void write_training_csv(const std::string& path, const std::vector<EpochRecord>& records) {
  std::ofstream out = open_out(path);
  out << "epoch,loss,best_cost,shortfall,pairing\n";
  for (const EpochRecord& r : records) {
    out << r.epoch << "," << fmt(r.loss) << "," << fmt(r.best_cost) << ","
        << (r.shortfall ? 1 : 0) << ",";
    for (std::size_t i = 0; i < r.best.size(); ++i) {
      if (i) out << ";";
      out << r.best[i];
    }
    out << "\n";
  }
}

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ConfigError("plot: missing column '" + name + "'");
  }
};

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("plot: cannot open '" + path + "'");
  Csv csv;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.empty()) continue;
    if (line.back() == ',') fields.push_back("");
    if (first) {
      csv.header = std::move(fields);
      first = false;
    } else {
      csv.rows.push_back(std::move(fields));
    }
  }
  if (first) throw ConfigError("plot: empty input '" + path + "'");
  return csv;
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

void write_line_chart(const std::string& svg_path, const std::vector<Series>& series,
                      const std::string& x_label, const std::string& y_label) {
  std::size_t total = 0;
  for (const Series& s : series) total += s.points.size();
  if (total == 0) throw ConfigError("plot: no finite data points");

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const Series& s : series)
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  if (x_hi <= x_lo) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi <= y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double W = 860, H = 540, ml = 90, mr = 180, mt = 30, mb = 60;
  const auto sx = [&](double x) {
    return ml + (x - x_lo) / (x_hi - x_lo) * (W - ml - mr);
  };
  const auto sy = [&](double y) {
    return H - mb - (y - y_lo) / (y_hi - y_lo) * (H - mt - mb);
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ofstream out = open_out(svg_path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
      << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double x = x_lo + (x_hi - x_lo) * i / 5.0;
    const double y = y_lo + (y_hi - y_lo) * i / 5.0;
    out << "<text x=\"" << sx(x) << "\" y=\"" << H - mb + 18
        << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(x) << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << sy(y) + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << sy(y) << "\" x2=\"" << W - mr
        << "\" y2=\"" << sy(y) << "\" stroke=\"#dddddd\"/>\n";
  }
  out << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 14
      << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << (mt + H - mb) / 2
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (mt + H - mb) / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % 8];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[i].points)
      out << sx(x) << "," << sy(y) << " ";
    out << "\"/>\n";
    const double ly = mt + 20 + 18.0 * i;
    out << "<line x1=\"" << W - mr + 12 << "\" y1=\"" << ly << "\" x2=\""
        << W - mr + 40 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - mr + 46 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\">" << series[i].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void plot_sweep_csv(const std::string& aggregate_csv, const std::string& svg_path) {
  const Csv csv = read_csv(aggregate_csv);
  const int c_scheme = csv.col("scheme");
  const int c_x = csv.col("sweep_value");
  const int c_y = csv.col("mean_cost");
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  for (const auto& row : csv.rows) {
    const std::string& scheme = row[c_scheme];
    const double x = std::stod(row[c_x]);
    const double y = std::stod(row[c_y]);
    if (!std::isfinite(y)) continue;
    if (!index.count(scheme)) {
      index[scheme] = series.size();
      series.push_back(Series{scheme, {}});
    }
    series[index[scheme]].points.emplace_back(x, y);
  }
  for (Series& s : series)
    std::sort(s.points.begin(), s.points.end());
  write_line_chart(svg_path, series, "sweep value", "mean LQR cost");
}

void plot_training_csv(const std::string& training_csv, const std::string& svg_path) {
  const Csv csv = read_csv(training_csv);
  const int c_epoch = csv.col("epoch");
  const int c_loss = csv.col("loss");
  Series s{"loss", {}};
  for (const auto& row : csv.rows) {
    const double y = std::stod(row[c_loss]);
    if (std::isfinite(y)) s.points.emplace_back(std::stod(row[c_epoch]), y);
  }
  write_line_chart(svg_path, {s}, "epoch", "cross-entropy loss");
}

namespace {

Topology random_small_topology(int S, int K, Rng& rng) {
  TopologyConfig tc;
  tc.region_w = 2000.0;
  tc.region_h = 2000.0;
  tc.eih_position = {1000.0, 1000.0};
  tc.eih_height = 300.0;
  tc.num_sensors = S;
  tc.num_actuators = K;
  tc.sensor_range = 2500.0;  // full coverage keeps every pairing valid
  tc.p_u_max = 0.1;
  tc.rho = 0.01;
  for (int k = 0; k < K; ++k)
    tc.controls.push_back(LoopCostParams{rng.uniform(10.0, 80.0), 100, 0.01, 1.0, 1.0});
  return generate_topology(tc, rng);
}

bool verify_assignment(std::uint64_t seed, std::string& report) {
  Rng rng = Rng::stream(seed, {streams::kEval, 101});
  int failures = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int S = 6, K = 3;
    std::vector<std::vector<int>> sets(K);
    for (int k = 0; k < K; ++k)
      for (int s = 0; s < S; ++s)
        if (rng.uniform() < 0.7) sets[k].push_back(s);
    for (int k = 0; k < K; ++k)
      if (sets[k].empty()) sets[k].push_back(static_cast<int>(rng.uniform_int(S)));
    std::vector<double> h(S), g(S), e(K);
    for (auto& v : h) v = rng.uniform(0.1, 2.0);
    for (auto& v : g) v = rng.uniform(50.0, 500.0);
    for (auto& v : e) v = rng.uniform(5.0, 50.0);
    UtilityMatrix um;
    try {
      um = build_utility(UtilityScheme::Cca, 0.5, h, g, e, sets);
    } catch (const Error&) {
      continue;
    }
    double best = -1.0;
    std::vector<Pairing> all;
    try {
      all = enumerate_pairings(sets, 10000);
    } catch (const Error&) {
      continue;
    }
    for (const Pairing& p : all) {
      double v = 0.0;
      bool ok = true;
      for (int k = 0; k < K; ++k) {
        if (um.U(p[k], k) <= 0.0) ok = false;
        v += um.U(p[k], k);
      }
      if (ok) best = std::max(best, v);
    }
    if (best < 0.0) continue;
    try {
      const Pairing match = hungarian_match(um);
      double v = 0.0;
      for (int k = 0; k < K; ++k) v += um.U(match[k], k);
      if (std::abs(v - best) > 1e-9) ++failures;
    } catch (const Error&) {
      ++failures;
    }
  }
  report += "assignment: " + std::to_string(100 - failures) + "/100 matched\n";
  return failures == 0;
}

bool verify_allocation(std::uint64_t seed, std::string& report) {
  Rng rng = Rng::stream(seed, {streams::kEval, 102});
  int failures = 0;
  const int instances = 10;
  for (int inst = 0; inst < instances; ++inst) {
    const int K = 1 + static_cast<int>(rng.uniform_int(2));
    Topology topo = random_small_topology(K + 2, K, rng);
    ChannelRealization ch = realize_channels(topo, EnvParams{}, rng);
    Pairing pairing(K);
    for (int k = 0; k < K; ++k) pairing[k] = k;
    LoopBudget tb;
    ResourceBudget rb;
    try {
      const Allocation a = solve_p3(pairing, topo, ch, tb, rb);
      const GridResult g = grid_search_allocation(pairing, topo, ch, tb, rb);
      if (!a.feasible || !g.feasible ||
          std::abs(a.total_cost - g.objective) / g.objective > 1e-3)
        ++failures;
    } catch (const Error&) {
      ++failures;
    }
  }
  report += "allocation: " + std::to_string(instances - failures) + "/" +
            std::to_string(instances) + " within 0.1% of the grid oracle\n";
  return failures == 0;
}

bool verify_sampler(std::uint64_t seed, std::string& report) {
  Rng rng = Rng::stream(seed, {streams::kEval, 103});
  const int S = 6;
  Eigen::MatrixXd scores(S, 1);
  for (int s = 0; s < S; ++s) scores(s, 0) = rng.uniform(0.05, 1.0);
  std::vector<std::vector<int>> sets{{0, 1, 2, 3, 4, 5}};
  std::vector<int> counts(S, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const SampleResult r = sample_pairings(scores, sets, 1, 1, rng);
    if (!r.pairings.empty()) ++counts[r.pairings[0][0]];
  }
  double total = scores.col(0).sum(), worst = 0.0;
  for (int s = 0; s < S; ++s)
    worst = std::max(worst, std::abs(counts[s] / double(draws) - scores(s, 0) / total));
  report += "sampler: max abs frequency error " + fmt(worst) + "\n";
  return worst < 0.015;
}

}  // namespace

bool verify_command(std::uint64_t seed, std::string& report) {
  bool ok = true;
  ok = verify_assignment(seed, report) && ok;
  ok = verify_allocation(seed, report) && ok;
  ok = verify_sampler(seed, report) && ok;
  return ok;
}

}  // namespace sc3
