#include "sfd/results.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sfd/error.hpp"

namespace sfd {
namespace {

namespace fs = std::filesystem;

std::string iso_utc_now() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

nlohmann::ordered_json config_json(const ParsedConfig& pc) {
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [key, value] : render_config(pc)) cfg[key] = value;
  return cfg;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void preflight_out_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory " + out_dir + ": " +
                  ec.message());
  }
  const fs::path probe = fs::path(out_dir) / ".write_probe";
  {
    std::ofstream out(probe, std::ios::trunc);
    out << "ok";
    out.flush();
    if (!out) throw IoError("output directory not writable: " + out_dir);
  }
  fs::remove(probe, ec);
}

void emit_results(const ParsedConfig& pc, const std::vector<RoundLog>& logs,
                  const RunSummaryInfo& info, const std::string& out_dir) {
  const fs::path dir(out_dir);
  const nlohmann::ordered_json cfg = config_json(pc);

  nlohmann::ordered_json manifest;
  manifest["artifact_version"] = "1.0.0";
  manifest["seed"] = pc.config.seed;
  manifest["started_at"] = iso_utc_now();
  manifest["outputs"] = {{"rounds_csv", "rounds.csv"},
                         {"summary_json", "summary.json"}};
  manifest["config"] = cfg;
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");

  std::string csv =
      "round,client_id,test_acc,local_loss,distill_loss,p_proxy_client,"
      "p_proxy_server,upload_bytes,download_bytes,p1,misleading_term,"
      "ambiguous_term\n";
  std::size_t total_upload = 0;
  std::size_t total_download = 0;
  for (const RoundLog& log : logs) {
    const std::size_t K = log.test_acc.size();
    const std::string shared = format_double(log.diag.p1) + "," +
                               format_double(log.diag.misleading_term) + "," +
                               format_double(log.diag.ambiguous_term);
    for (std::size_t k = 0; k < K; ++k) {
      csv += std::to_string(log.round) + "," + std::to_string(k) + "," +
             format_double(log.test_acc[k]) + "," +
             format_double(log.local_loss[k]) + "," +
             format_double(log.distill_loss[k]) + "," +
             format_double(log.client_kept_fraction[k]) + "," +
             format_double(log.p_proxy_server) + "," +
             std::to_string(log.upload_bytes_per_client[k]) + "," +
             std::to_string(log.download_bytes_per_client[k]) + "," + shared +
             "\n";
    }
    csv += std::to_string(log.round) + ",-1," + format_double(log.mean_acc) +
           "," + format_double(mean_of(log.local_loss)) + "," +
           format_double(mean_of(log.distill_loss)) + "," +
           format_double(log.p_proxy_client) + "," +
           format_double(log.p_proxy_server) + "," +
           std::to_string(log.upload_bytes) + "," +
           std::to_string(log.download_bytes) + "," + shared + "\n";
    total_upload += log.upload_bytes;
    total_download += log.download_bytes;
  }
  atomic_write(dir / "rounds.csv", csv);

  nlohmann::ordered_json summary;
  summary["partial"] = info.partial;
  summary["rounds_completed"] = logs.empty() ? 0 : logs.back().round;
  if (logs.empty()) {
    summary["final_mean_accuracy"] = nullptr;
    summary["final_per_client_accuracy"] = nlohmann::ordered_json::array();
  } else {
    summary["final_mean_accuracy"] = logs.back().mean_acc;
    summary["final_per_client_accuracy"] = logs.back().test_acc;
  }
  summary["total_upload_bytes"] = total_upload;
  summary["total_download_bytes"] = total_download;
  summary["setup_bytes"] = info.proxy_rows * info.dim * 8;
  summary["config"] = cfg;
  atomic_write(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace sfd
