#include "sfd/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "sfd/error.hpp"

namespace sfd {
namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const std::size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (pos != v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  if (pos != v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key,
                                      const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty list entry");
    out.push_back(to_size(key, item));
  }
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

Method to_method(const std::string& key, const std::string& v) {
  if (v == "selective") return Method::Selective;
  if (v == "noselector") return Method::NoSelector;
  if (v == "indep") return Method::Indep;
  if (v == "fedavg") return Method::FedAvg;
  throw ConfigError(key + ": expected selective|noselector|indep|fedavg, got '" +
                    v + "'");
}

std::string from_method(Method m) {
  switch (m) {
    case Method::Selective: return "selective";
    case Method::NoSelector: return "noselector";
    case Method::Indep: return "indep";
    case Method::FedAvg: return "fedavg";
  }
  return "selective";
}

struct KeyDef {
  const char* name;
  std::function<void(ParsedConfig&, const std::string&)> set;
  std::function<std::string(const ParsedConfig&)> render;
};

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      {"method",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.method = to_method("method", v);
       },
       [](const ParsedConfig& pc) { return from_method(pc.config.method); }},
      {"mode",
       [](ParsedConfig& pc, const std::string& v) {
         if (v == "hard") {
           pc.config.mode = KnowledgeMode::Hard;
         } else if (v == "soft") {
           pc.config.mode = KnowledgeMode::Soft;
         } else {
           throw ConfigError("mode: expected hard|soft, got '" + v + "'");
         }
       },
       [](const ParsedConfig& pc) {
         return pc.config.mode == KnowledgeMode::Hard ? "hard" : "soft";
       }},
      {"dataset",
       [](ParsedConfig& pc, const std::string& v) {
         if (v == "synth") {
           pc.config.dataset = DatasetKind::Synth;
         } else if (v == "idx") {
           pc.config.dataset = DatasetKind::Idx;
         } else {
           throw ConfigError("dataset: expected synth|idx, got '" + v + "'");
         }
       },
       [](const ParsedConfig& pc) {
         return pc.config.dataset == DatasetKind::Synth ? "synth" : "idx";
       }},
      {"rounds",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.rounds = to_int("rounds", v);
       },
       [](const ParsedConfig& pc) { return std::to_string(pc.config.rounds); }},
      {"seed",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.seed = to_u64("seed", v);
       },
       [](const ParsedConfig& pc) { return std::to_string(pc.config.seed); }},
      {"num_clients",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.partition.num_clients = to_int("num_clients", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.partition.num_clients);
       }},
      {"synth.classes",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.synth.classes = to_int("synth.classes", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.synth.classes);
       }},
      {"synth.dim",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.synth.dim = to_size("synth.dim", v);
       },
       [](const ParsedConfig& pc) { return std::to_string(pc.config.synth.dim); }},
      {"synth.train_per_class",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.synth.train_per_class = to_size("synth.train_per_class", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.synth.train_per_class);
       }},
      {"synth.test_per_class",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.synth.test_per_class = to_size("synth.test_per_class", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.synth.test_per_class);
       }},
      {"synth.separation",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.synth.separation = to_double("synth.separation", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.synth.separation);
       }},
      {"synth.noise",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.synth.noise = to_double("synth.noise", v);
       },
       [](const ParsedConfig& pc) { return fmt_double(pc.config.synth.noise); }},
      {"idx.train_images",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.idx.train_images = v;
       },
       [](const ParsedConfig& pc) { return pc.config.idx.train_images; }},
      {"idx.train_labels",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.idx.train_labels = v;
       },
       [](const ParsedConfig& pc) { return pc.config.idx.train_labels; }},
      {"idx.test_images",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.idx.test_images = v;
       },
       [](const ParsedConfig& pc) { return pc.config.idx.test_images; }},
      {"idx.test_labels",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.idx.test_labels = v;
       },
       [](const ParsedConfig& pc) { return pc.config.idx.test_labels; }},
      {"idx.per_class_limit",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.idx.per_class_limit = to_size("idx.per_class_limit", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.idx.per_class_limit);
       }},
      {"partition.mode",
       [](ParsedConfig& pc, const std::string& v) {
         if (v == "strong") {
           pc.config.partition.mode = PartitionMode::StrongNonIID;
         } else if (v == "weak") {
           pc.config.partition.mode = PartitionMode::WeakNonIID;
         } else if (v == "dirichlet") {
           pc.config.partition.mode = PartitionMode::Dirichlet;
         } else if (v == "iid") {
           pc.config.partition.mode = PartitionMode::IID;
         } else {
           throw ConfigError(
               "partition.mode: expected strong|weak|dirichlet|iid, got '" + v +
               "'");
         }
       },
       [](const ParsedConfig& pc) -> std::string {
         switch (pc.config.partition.mode) {
           case PartitionMode::StrongNonIID: return "strong";
           case PartitionMode::WeakNonIID: return "weak";
           case PartitionMode::Dirichlet: return "dirichlet";
           case PartitionMode::IID: return "iid";
         }
         return "strong";
       }},
      {"partition.beta",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.partition.beta = to_double("partition.beta", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.partition.beta);
       }},
      {"partition.proxy_fraction",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.partition.proxy_fraction_per_class =
             to_double("partition.proxy_fraction", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.partition.proxy_fraction_per_class);
       }},
      {"partition.validation_fraction",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.partition.validation_fraction =
             to_double("partition.validation_fraction", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.partition.validation_fraction);
       }},
      {"client_strategy",
       [](ParsedConfig& pc, const std::string& v) {
         if (v == "density_ratio") {
           pc.config.selector.client_strategy = ClientStrategy::DensityRatio;
         } else if (v == "confidence") {
           pc.config.selector.client_strategy = ClientStrategy::Confidence;
         } else if (v == "none") {
           pc.config.selector.client_strategy = ClientStrategy::None;
         } else {
           throw ConfigError(
               "client_strategy: expected density_ratio|confidence|none, got '" +
               v + "'");
         }
       },
       [](const ParsedConfig& pc) -> std::string {
         switch (pc.config.selector.client_strategy) {
           case ClientStrategy::DensityRatio: return "density_ratio";
           case ClientStrategy::Confidence: return "confidence";
           case ClientStrategy::None: return "none";
         }
         return "density_ratio";
       }},
      {"tau_client",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.selector.tau_client = to_double("tau_client", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.selector.tau_client);
       }},
      {"tau_server",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.selector.tau_server = to_double("tau_server", v);
         pc.tau_server_set = true;
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.selector.tau_server);
       }},
      {"confidence_cutoff",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.selector.confidence_cutoff =
             to_double("confidence_cutoff", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.selector.confidence_cutoff);
       }},
      {"lr",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.train.learning_rate = to_double("lr", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.train.learning_rate);
       }},
      {"pretrain_steps",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.train.pretrain_steps = to_size("pretrain_steps", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.train.pretrain_steps);
       }},
      {"s_local",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.train.s_local = to_size("s_local", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.train.s_local);
       }},
      {"s_distill",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.train.s_distill = to_size("s_distill", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.train.s_distill);
       }},
      {"local_batch",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.train.local_batch = to_size("local_batch", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.train.local_batch);
       }},
      {"distill_batch",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.train.distill_batch = to_size("distill_batch", v);
       },
       [](const ParsedConfig& pc) {
         return std::to_string(pc.config.train.distill_batch);
       }},
      {"alpha",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.train.alpha = to_double("alpha", v);
       },
       [](const ParsedConfig& pc) { return fmt_double(pc.config.train.alpha); }},
      {"weighted",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.weighted = to_bool("weighted", v);
       },
       [](const ParsedConfig& pc) {
         return pc.config.weighted ? "true" : "false";
       }},
      {"kulsif.beta",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.kulsif.beta = to_double("kulsif.beta", v);
       },
       [](const ParsedConfig& pc) { return fmt_double(pc.config.kulsif.beta); }},
      {"kulsif.sigma",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.kulsif.sigma = to_double("kulsif.sigma", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.kulsif.sigma);
       }},
      {"kulsif.margin",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.kulsif.margin = to_double("kulsif.margin", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_double(pc.config.kulsif.margin);
       }},
      {"fedavg.hidden",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.fedavg_hidden = to_size_list("fedavg.hidden", v);
       },
       [](const ParsedConfig& pc) {
         return fmt_size_list(pc.config.fedavg_hidden);
       }},
      {"fedavg.size_weighted",
       [](ParsedConfig& pc, const std::string& v) {
         pc.config.fedavg_size_weighted = to_bool("fedavg.size_weighted", v);
         pc.fedavg_size_weighted_set = true;
       },
       [](const ParsedConfig& pc) {
         return pc.config.fedavg_size_weighted ? "true" : "false";
       }},
  };
  return table;
}

const KeyDef* find_key(const std::string& key) {
  for (const KeyDef& def : key_table()) {
    if (key == def.name) return &def;
  }
  return nullptr;
}

}  // namespace

void ParsedConfig::finalize() {
  if (!fedavg_size_weighted_set) {
    config.fedavg_size_weighted =
        config.partition.mode == PartitionMode::Dirichlet;
  }
}

ParsedConfig default_config() { return ParsedConfig{}; }

bool is_known_key(const std::string& key) { return find_key(key) != nullptr; }

void apply_override(ParsedConfig& pc, const std::string& key,
                    const std::string& value) {
  const KeyDef* def = find_key(key);
  if (def == nullptr) throw ConfigError("unknown key '" + key + "'");
  def->set(pc, value);
}

std::vector<std::pair<std::string, std::string>> render_config(
    const ParsedConfig& pc) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeyDef& def : key_table()) {
    out.emplace_back(def.name, def.render(pc));
  }
  return out;
}

ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  ParsedConfig pc = default_config();

  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    // A manifest from a previous run: replay its resolved config.
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("manifest parse error in " + path + ": " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object()) {
      throw ConfigError("manifest " + path + " has no config object");
    }
    for (const auto& [key, value] : j["config"].items()) {
      if (!value.is_string()) {
        throw ConfigError("manifest key '" + key + "' must be a string value");
      }
      apply_override(pc, key, value.get<std::string>());
    }
    return pc;
  }

  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    try {
      apply_override(pc, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pc;
}

}  // namespace sfd
