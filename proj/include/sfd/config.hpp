#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sfd/orchestrator.hpp"

namespace sfd {

// An ExperimentConfig plus the bookkeeping needed for faithful echoing:
// which keys were set explicitly (the rest take documented defaults).
struct ParsedConfig {
  ExperimentConfig config;
  bool tau_server_set = false;
  bool fedavg_size_weighted_set = false;

  // Resolves auto defaults that depend on other keys. Currently: FedAvg
  // averaging is size-weighted by default only under Dirichlet partitions
  // (the one mode with unequal client sizes by construction).
  void finalize();
};

ParsedConfig default_config();

// Reads either the flat `key = value` format (# comments, unknown keys are
// errors) or a manifest.json from a previous run (detected by a leading '{'),
// which replays that run's fully resolved config.
ParsedConfig parse_config(const std::string& path);

// Applies one key=value pair; used for CLI flag overrides and sweeps.
void apply_override(ParsedConfig& pc, const std::string& key,
                    const std::string& value);

bool is_known_key(const std::string& key);

// Every known key with its resolved value, in canonical order. This is what
// the manifest records; a run is reproducible from it alone.
std::vector<std::pair<std::string, std::string>> render_config(
    const ParsedConfig& pc);

}  // namespace sfd
