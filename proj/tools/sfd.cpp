// Command-line driver: run one experiment, sweep a parameter, or verify the
// built-in oracle suite. All numerical work lives in the library; this file
// is argument plumbing and result emission.
#include <cctype>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfd/config.hpp"
#include "sfd/orchestrator.hpp"
#include "sfd/results.hpp"
#include "sfd/selfcheck.hpp"

namespace {

struct RunFlags {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::string method;
  std::string mode;
};

void print_run_header(const sfd::ParsedConfig& pc) {
  std::string note = pc.tau_server_set ? "" : " (default)";
  std::printf("method=%s mode=%s seed=%llu tau_client=%g tau_server=%g%s\n",
              pc.config.method == sfd::Method::Selective    ? "selective"
              : pc.config.method == sfd::Method::NoSelector ? "noselector"
              : pc.config.method == sfd::Method::Indep      ? "indep"
                                                            : "fedavg",
              pc.config.mode == sfd::KnowledgeMode::Hard ? "hard" : "soft",
              static_cast<unsigned long long>(pc.config.seed),
              pc.config.selector.tau_client, pc.config.selector.tau_server,
              note.c_str());
}

// Flags override file values override defaults.
void apply_flags(sfd::ParsedConfig& pc, const RunFlags& flags) {
  if (!flags.seed.empty()) sfd::apply_override(pc, "seed", flags.seed);
  if (!flags.method.empty()) sfd::apply_override(pc, "method", flags.method);
  if (!flags.mode.empty()) sfd::apply_override(pc, "mode", flags.mode);
}

int run_one(sfd::ParsedConfig pc, const std::string& out_dir) {
  pc.finalize();
  sfd::preflight_out_dir(out_dir);
  print_run_header(pc);

  std::vector<sfd::RoundLog> logs;
  sfd::RunSummaryInfo info;
  auto observer = [&](const sfd::RoundObservation& obs) {
    logs.push_back(obs.log);
    info.proxy_rows = obs.federation.data.proxy_features.rows;
    info.dim = obs.federation.data.proxy_features.cols;
  };
  try {
    sfd::run_experiment(pc.config, observer);
  } catch (const std::exception& e) {
    info.partial = true;
    sfd::emit_results(pc, logs, info, out_dir);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  sfd::emit_results(pc, logs, info, out_dir);
  std::printf("wrote %s/manifest.json, rounds.csv, summary.json (%zu rounds)\n",
              out_dir.c_str(), logs.size());
  return 0;
}

int cmd_run(const RunFlags& flags) {
  sfd::ParsedConfig pc = sfd::parse_config(flags.config_path);
  apply_flags(pc, flags);
  return run_one(std::move(pc), flags.out_dir);
}

// Subdirectory name for one sweep value: keep filename-safe characters.
std::string sanitize_value(const std::string& v) {
  std::string out;
  for (char c : v) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
        c == '+' || c == '_') {
      out += c;
    }
  }
  return out.empty() ? "value" : out;
}

int cmd_sweep(const RunFlags& flags, const std::string& param,
              const std::string& values) {
  if (!sfd::is_known_key(param)) {
    std::fprintf(stderr, "error: unknown sweep parameter '%s'\n",
                 param.c_str());
    return 1;
  }
  std::vector<std::string> items;
  std::string cur;
  for (char c : values) {
    if (c == ',') {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  items.push_back(cur);
  if (items.empty() || (items.size() == 1 && items[0].empty())) {
    std::fprintf(stderr, "error: --values is empty\n");
    return 1;
  }

  for (const std::string& v : items) {
    sfd::ParsedConfig pc = sfd::parse_config(flags.config_path);
    apply_flags(pc, flags);
    sfd::apply_override(pc, param, v);
    const std::string sub =
        flags.out_dir + "/" + param + "_" + sanitize_value(v);
    std::printf("--- %s = %s -> %s\n", param.c_str(), v.c_str(), sub.c_str());
    const int rc = run_one(std::move(pc), sub);
    if (rc != 0) return rc;
  }
  return 0;
}

int cmd_verify() {
  const std::vector<sfd::CheckResult> results = sfd::run_self_checks();
  const sfd::CheckResult* first_fail = nullptr;
  for (const sfd::CheckResult& r : results) {
    if (r.ok) {
      std::printf("ok %s\n", r.name.c_str());
    } else {
      std::printf("FAIL %s: %s\n", r.name.c_str(), r.detail.c_str());
      if (!first_fail) first_fail = &r;
    }
  }
  if (first_fail) {
    std::fprintf(stderr, "error: check '%s' failed\n", first_fail->name.c_str());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selective federated distillation simulator"};
  app.require_subcommand(1);

  RunFlags flags;
  std::string sweep_param;
  std::string sweep_values;

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", flags.config_path, "experiment config file")
      ->required();
  run->add_option("--out", flags.out_dir, "output directory")->required();
  run->add_option("--seed", flags.seed, "override seed");
  run->add_option("--method", flags.method,
                  "override method (selective|noselector|indep|fedavg)");
  run->add_option("--mode", flags.mode, "override knowledge mode (hard|soft)");

  CLI::App* sweep = app.add_subcommand("sweep", "run once per parameter value");
  sweep->add_option("--config", flags.config_path, "experiment config file")
      ->required();
  sweep->add_option("--param", sweep_param, "config key to sweep")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required();
  sweep->add_option("--out", flags.out_dir, "parent output directory")
      ->required();
  sweep->add_option("--seed", flags.seed, "override seed");
  sweep->add_option("--method", flags.method, "override method");
  sweep->add_option("--mode", flags.mode, "override knowledge mode");

  CLI::App* verify =
      app.add_subcommand("verify", "run the built-in oracle suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(flags);
    if (sweep->parsed()) return cmd_sweep(flags, sweep_param, sweep_values);
    if (verify->parsed()) return cmd_verify();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
