#pragma once

#include <string>
#include <vector>

#include "sfd/config.hpp"
#include "sfd/orchestrator.hpp"

namespace sfd {

// Creates out_dir (recursively) and proves it writable, so a bad output path
// fails before any training starts.
void preflight_out_dir(const std::string& out_dir);

struct RunSummaryInfo {
  std::size_t proxy_rows = 0;
  std::size_t dim = 0;
  bool partial = false;
};

// %.17g rendering: round-trip exact, NaN prints as nan.
std::string format_double(double v);

// Writes manifest.json, rounds.csv and summary.json into out_dir, each via
// temp-file-plus-rename. rounds.csv carries one row per (round, client) and
// a client_id=-1 aggregate row per round.
void emit_results(const ParsedConfig& pc, const std::vector<RoundLog>& logs,
                  const RunSummaryInfo& info, const std::string& out_dir);

}  // namespace sfd
