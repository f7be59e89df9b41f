#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sc3/harness.hpp"
#include "sc3/oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = ".";
  int jobs = 1;
  std::string scale = "desk";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_config = true) {
  auto* c = cmd->add_option("--config", o.config, "scenario file");
  if (needs_config) c->required();
  cmd->add_option("--seed", o.seed, "master seed override")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--jobs", o.jobs, "worker threads (env SC3_JOBS overrides)");
  cmd->add_option("--scale", o.scale, "desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
}

sc3::ScenarioConfig load(const CommonOpts& o) {
  sc3::ScenarioConfig cfg = sc3::load_scenario(o.config);
  if (o.seed_set) cfg.experiment.master_seed = o.seed;
  if (o.scale == "desk")
    cfg.experiment.realizations = std::min(cfg.experiment.realizations, 20);
  return cfg;
}

int effective_jobs(int jobs) {
  if (const char* env = std::getenv("SC3_JOBS")) {
    const int j = std::atoi(env);
    if (j > 0) return j;
  }
  return jobs;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sc3::ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw sc3::ConfigError("cannot write '" + path + "'");
  out << text;
}

std::string out_path(const CommonOpts& o, const std::string& name) {
  fs::create_directories(o.out);
  return (fs::path(o.out) / name).string();
}

int cmd_gen_topology(const CommonOpts& o) {
  const sc3::ScenarioConfig cfg = load(o);
  const sc3::Topology topo = sc3::scenario_topology(cfg);
  json j;
  j["eih"] = {{"x", topo.eih_position.x()},
              {"y", topo.eih_position.y()},
              {"height", topo.eih_height}};
  for (const auto& s : topo.sensors)
    j["sensors"].push_back({{"x", s.position.x()},
                            {"y", s.position.y()},
                            {"range", s.range},
                            {"gamma", s.gamma},
                            {"p_u_max", s.p_u_max},
                            {"rho", s.rho}});
  for (const auto& a : topo.actuators)
    j["actuators"].push_back(
        {{"x", a.position.x()}, {"y", a.position.y()}, {"entropy", a.control.e}});
  j["effective_sets"] = topo.effective_sets;
  write_file(out_path(o, "topology.json"), j.dump(2) + "\n");
  std::cout << sc3::scenario_provenance(cfg) << "\n"
            << "wrote " << out_path(o, "topology.json") << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o, const std::string& resume, int epochs) {
  const sc3::ScenarioConfig cfg = load(o);
  const std::string checkpoint_text = resume.empty() ? "" : read_file(resume);
  const sc3::TrainOutput out = sc3::train_command(cfg, checkpoint_text, epochs);
  sc3::write_training_csv(out_path(o, "training.csv"), out.records);
  sc3::TrainConfig tc = cfg.train;
  std::uint64_t seed = cfg.experiment.master_seed;
  if (!checkpoint_text.empty()) {
    sc3::LoacState scratch;
    sc3::checkpoint_from_json(checkpoint_text, scratch, tc, seed);
  }
  write_file(out_path(o, "checkpoint.json"),
             sc3::checkpoint_to_json(out.state, tc, seed));
  std::cout << sc3::scenario_provenance(cfg) << "\n"
            << "trained through epoch " << out.state.next_epoch << "\n";
  return 0;
}

int cmd_sweep(const CommonOpts& o, const std::string& checkpoint) {
  const sc3::ScenarioConfig cfg = load(o);
  sc3::LoacState state;
  const sc3::PairingPolicy* policy = nullptr;
  if (!checkpoint.empty()) {
    sc3::TrainConfig tc;
    std::uint64_t seed = 0;
    sc3::checkpoint_from_json(read_file(checkpoint), state, tc, seed);
    policy = &state.policy;
  }
  const sc3::SweepResult res = sc3::run_sweep(cfg, effective_jobs(o.jobs), policy);
  sc3::write_records_csv(out_path(o, "records.csv"), res.records);
  sc3::write_aggregate_csv(out_path(o, "aggregates.csv"), res.aggregates);
  sc3::write_timing_csv(out_path(o, "timing.csv"), res.records);
  int failed = 0;
  for (const auto& r : res.records)
    if (!r.error.empty()) ++failed;
  std::cout << sc3::scenario_provenance(cfg) << "\n"
            << res.records.size() << " cells, " << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

int cmd_plot(const std::string& in, const std::string& out) {
  std::ifstream f(in);
  std::string header;
  std::getline(f, header);
  if (header.rfind("epoch,", 0) == 0)
    sc3::plot_training_csv(in, out);
  else
    sc3::plot_sweep_csv(in, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  std::string report;
  const bool ok = sc3::verify_command(seed, report);
  std::cout << report << (ok ? "verify: PASS" : "verify: FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SC3 closed-loop pairing and resource allocation toolkit"};
  app.require_subcommand(1);

  CommonOpts gto, tro, swo, evo;
  std::string resume, checkpoint, eval_checkpoint, plot_in, plot_out;
  int epochs = -1;
  std::uint64_t verify_seed = 1;

  auto* gen = app.add_subcommand("gen-topology", "emit the scenario topology");
  add_common(gen, gto);

  auto* train = app.add_subcommand("train", "run LOAC training");
  add_common(train, tro);
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--epochs", epochs, "stop after this epoch (default: config)");

  auto* sweep = app.add_subcommand("sweep", "run the configured experiment sweep");
  add_common(sweep, swo);
  sweep->add_option("--checkpoint", checkpoint, "trained policy for scheme loac");

  auto* evaluate = app.add_subcommand("evaluate", "single-realization scheme comparison");
  add_common(evaluate, evo);
  evaluate->add_option("--checkpoint", eval_checkpoint, "trained policy for scheme loac");

  auto* plot = app.add_subcommand("plot", "render a CSV as an SVG line chart");
  plot->add_option("--in", plot_in, "input CSV")->required();
  plot->add_option("--out", plot_out, "output SVG")->required();

  auto* verify = app.add_subcommand("verify", "run the oracle self-check suites");
  verify->add_option("--seed", verify_seed, "verification seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_topology(gto);
    if (train->parsed()) return cmd_train(tro, resume, epochs);
    if (sweep->parsed()) return cmd_sweep(swo, checkpoint);
    if (evaluate->parsed()) {
      const CommonOpts& oo = evo;
      sc3::ScenarioConfig run_cfg = load(oo);
      run_cfg.experiment.realizations = 1;
      sc3::LoacState state;
      const sc3::PairingPolicy* policy = nullptr;
      if (!eval_checkpoint.empty()) {
        sc3::TrainConfig tc;
        std::uint64_t seed = 0;
        sc3::checkpoint_from_json(read_file(eval_checkpoint), state, tc, seed);
        policy = &state.policy;
      }
      const sc3::SweepResult res = sc3::run_sweep(run_cfg, effective_jobs(oo.jobs), policy);
      sc3::write_records_csv(out_path(oo, "evaluate.csv"), res.records);
      for (const auto& r : res.records)
        std::cout << r.scheme << " sweep=" << r.sweep_value
                  << " cost=" << r.total_cost << (r.feasible ? "" : " (infeasible)")
                  << (r.error.empty() ? "" : " error=" + r.error) << "\n";
      int failed = 0;
      for (const auto& r : res.records)
        if (!r.error.empty()) ++failed;
      return failed == 0 ? 0 : 1;
    }
    if (plot->parsed()) return cmd_plot(plot_in, plot_out);
    if (verify->parsed()) return cmd_verify(verify_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
