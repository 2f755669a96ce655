// Command-line front end: validate, transform, execute, tune, and diff
// distributed programs described as JSON dataflow graphs.

#include <iostream>

#include <CLI11.hpp>

#include "ccopt/autotune.hpp"
#include "ccopt/diff.hpp"
#include "ccopt/json_io.hpp"
#include "ccopt/oracle.hpp"
#include "ccopt/runtime.hpp"
#include "ccopt/transform.hpp"

using namespace ccopt;

namespace {

struct CommonOpts {
  std::string program_path;
  std::string schedule_path;
  std::vector<std::string> sizes;  // NAME=VALUE
  int ranks = 4;
  int channels = 2;
  std::string protocol = "simple";
  double alpha = 0.5;
  double beta = 2000.0;
  double gamma = 2000.0;
  double lambda = 0.5;
  int64_t tile = 1 << 16;
  uint64_t seed = 1;
  std::string out_path;
  double tol = 1e-5;
  bool threaded = false;
  bool wall_time = false;
  bool alpha_set = false, beta_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_schedule) {
  cmd->add_option("program", o.program_path, "program JSON file")->required();
  if (with_schedule) cmd->add_option("--schedule", o.schedule_path, "schedule JSON file");
  cmd->add_option("--ranks", o.ranks, "total number of ranks (size symbol W)");
  cmd->add_option("--size", o.sizes, "size symbol binding NAME=VALUE (repeatable)");
  cmd->add_option("--channels", o.channels, "parallel ring channels");
  cmd->add_option("--protocol", o.protocol, "comm protocol preset: ll | simple")
      ->check(CLI::IsMember({"ll", "simple"}));
  cmd->add_option("--alpha", o.alpha, "per-message latency")->each([&o](const std::string&) {
    o.alpha_set = true;
  });
  cmd->add_option("--beta", o.beta, "bytes per microsecond per channel")
      ->each([&o](const std::string&) { o.beta_set = true; });
  cmd->add_option("--gamma", o.gamma, "element ops per microsecond");
  cmd->add_option("--lambda", o.lambda, "kernel launch overhead");
  cmd->add_option("--tile", o.tile, "communication buffer tile elements");
  cmd->add_option("--seed", o.seed, "input/dropout seed");
  cmd->add_option("--out", o.out_path, "write the JSON result here instead of stdout");
  cmd->add_option("--tol", o.tol, "verification tolerance");
  cmd->add_flag("--threaded", o.threaded, "run ranks on worker threads");
  cmd->add_flag("--wall-time", o.wall_time, "include wall-clock time in reports");
}

std::map<std::string, int64_t> size_symbols(const CommonOpts& o) {
  // desk-scale defaults; --size overrides anything but W
  std::map<std::string, int64_t> syms{{"B", 2}, {"S", 8}, {"H", 64}, {"N", 1024}};
  for (auto& s : o.sizes) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw Error(ErrCode::ParseError, "--size expects NAME=VALUE, got '" + s + "'");
    syms[s.substr(0, eq)] = std::stoll(s.substr(eq + 1));
  }
  syms["W"] = o.ranks;
  return syms;
}

CommConfig comm_config(const CommonOpts& o) {
  CommConfig cfg;
  cfg.channels = o.channels;
  cfg.buffer_tile_elems = o.tile;
  cfg.alpha = o.alpha;
  cfg.beta = o.beta;
  cfg.gamma = o.gamma;
  cfg.lambda = o.lambda;
  cfg.mode = o.threaded ? ExecMode::Threaded : ExecMode::RoundRobin;
  if (o.protocol == "ll") {
    cfg.protocol = Protocol::LowLatency;
    // low-latency preset: cheaper messages, flag bytes halve the bandwidth
    if (!o.alpha_set) cfg.alpha = o.alpha / 4;
    if (!o.beta_set) cfg.beta = o.beta / 2;
  }
  return cfg;
}

Program load_program(const CommonOpts& o) {
  Program p = program_from_json(load_json_file(o.program_path), size_symbols(o));
  auto diags = validate_program(p);
  if (!diags.empty()) {
    std::string msg = "invalid program:";
    for (auto& d : diags) msg += "\n  " + d;
    throw Error(ErrCode::InvalidInput, msg);
  }
  return p;
}

Program transformed_program(const CommonOpts& o, Provenance* prov = nullptr) {
  Program p = load_program(o);
  if (!o.schedule_path.empty())
    p = apply_schedule(std::move(p), schedule_from_json(load_json_file(o.schedule_path)), prov);
  return p;
}

void emit(const CommonOpts& o, const Json& j) {
  if (o.out_path.empty())
    std::cout << j.dump(2) << "\n";
  else
    save_json_file(o.out_path, j);
}

Json results_summary(const std::map<std::string, Collected>& res) {
  Json j = Json::object();
  for (auto& [key, c] : res) {
    Json e;
    e["shape"] = c.shape;
    e["per_rank"] = c.per_rank;
    uint64_t h = 0xcbf29ce484222325ull;
    for (auto& arr : c.data) h = fnv1a(arr.data(), arr.size() * sizeof(float), h);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    e["digest"] = buf;
    j[key] = e;
  }
  return j;
}

Json run_report_json(const CommonOpts& o, const RunReport& rep, double deviation) {
  Json j;
  j["simulated_time"] = rep.simulated_time;
  if (o.wall_time) j["wall_time"] = rep.wall_time;
  j["kernel_steps"] = rep.kernel_steps;
  j["comm_bytes"] = rep.comm_bytes;
  j["intergroup_bytes"] = rep.intergroup_bytes;
  j["traffic_saved_bytes"] = rep.traffic_saved_bytes;
  j["memory_elems"] = rep.memory_elems;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)rep.digest);
  j["digest"] = buf;
  j["deviation"] = deviation;
  j["results"] = results_summary(rep.results);
  return j;
}

int cmd_check(const CommonOpts& o) {
  Program p = program_from_json(load_json_file(o.program_path), size_symbols(o));
  auto diags = validate_program(p);
  Json j;
  j["name"] = p.name;
  j["world_size"] = p.world_size();
  j["diagnostics"] = diags;
  j["nodes"] = Json::array();
  for (auto& n : p.nodes) {
    Json nj;
    nj["id"] = n.id;
    nj["kind"] = op_kind_name(n.kind);
    nj["shape"] = n.out_shape;
    nj["layout"] = n.out_layout.str();
    nj["group"] = n.group;
    j["nodes"].push_back(nj);
  }
  emit(o, j);
  return diags.empty() ? 0 : 1;
}

int cmd_transform(const CommonOpts& o) {
  Provenance prov;
  Program p = transformed_program(o, &prov);
  Json j;
  j["program"] = program_to_json(p);
  j["provenance"] = Json::array();
  for (auto& [from, to] : prov)
    j["provenance"].push_back({{"from", from}, {"to", to}});
  emit(o, j);
  return 0;
}

int cmd_run(const CommonOpts& o) {
  Program base = load_program(o);
  Program p = transformed_program(o);
  auto oracle_ref = oracle_results(base, gen_decl_values(base, o.seed), o.seed);
  Engine eng(p, comm_config(o), o.seed);
  RunReport rep = eng.run(gen_decl_values(p, o.seed));
  double dev = compare_results(oracle_ref, rep.results);
  emit(o, run_report_json(o, rep, dev));
  return dev > o.tol ? 1 : 0;
}

int cmd_oracle(const CommonOpts& o) {
  Program p = load_program(o);
  auto res = oracle_results(p, gen_decl_values(p, o.seed), o.seed);
  Json j;
  j["results"] = results_summary(res);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)digest_results(res));
  j["digest"] = buf;
  emit(o, j);
  return 0;
}

int cmd_tune(const CommonOpts& o) {
  Program p = load_program(o);
  TuneConfig cfg;
  cfg.comm = comm_config(o);
  cfg.seed = o.seed;
  cfg.tol = o.tol;
  TuneReport rep = tune(p, cfg);
  emit(o, tune_report_to_json(rep));
  return 0;
}

int cmd_diff(const CommonOpts& o, const std::string& other_path) {
  Program a = load_program(o);
  CommonOpts o2 = o;
  o2.program_path = other_path;
  Program b = transformed_program(o2);
  auto entries = diff_programs(a, b);
  emit(o, diff_to_json(entries));
  return entries.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed computation + communication schedule optimizer"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string diff_other;
  CLI::App* check = app.add_subcommand("check", "validate a program and list inferred metadata");
  add_common(check, o, false);
  CLI::App* transform =
      app.add_subcommand("transform", "apply a schedule and print the transformed program");
  add_common(transform, o, true);
  CLI::App* run = app.add_subcommand("run", "execute on the simulated runtime, verify vs oracle");
  add_common(run, o, true);
  CLI::App* oracle = app.add_subcommand("oracle", "run the sequential reference executor");
  add_common(oracle, o, false);
  CLI::App* tune = app.add_subcommand("tune", "search schedules and report the winner");
  add_common(tune, o, false);
  CLI::App* diff = app.add_subcommand("diff", "structural diff of two programs");
  add_common(diff, o, true);
  diff->add_option("other", diff_other, "second program JSON file (schedule applies here)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (check->parsed()) return cmd_check(o);
    if (transform->parsed()) return cmd_transform(o);
    if (run->parsed()) return cmd_run(o);
    if (oracle->parsed()) return cmd_oracle(o);
    if (tune->parsed()) return cmd_tune(o);
    if (diff->parsed()) return cmd_diff(o, diff_other);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
