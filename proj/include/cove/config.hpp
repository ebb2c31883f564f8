#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cove/trainer.hpp"

namespace cove {

/// Flat `key = value` configuration with optional [section] headers.
/// Sections are organizational only; keys live in one flat namespace and a
/// later assignment overrides an earlier one.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
  }

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>") {
    KeyValueConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section");
        continue;  // sections are decorative
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
      std::string key = trim(s.substr(0, eq));
      std::string value = trim(s.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': not a number: " + it->second);
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': not a boolean: " + v);
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

inline std::vector<std::string> split_list(const std::string& s, char delim = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == delim) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<ExpertKind> parse_roster(const std::string& s) {
  std::vector<ExpertKind> roster;
  for (const auto& name : split_list(s)) roster.push_back(parse_kind(name));
  return roster;
}

/// Training-run configuration: TrainConfig plus dataset/output wiring.
/// Precedence per key: command-line flag > COVE_SEED (seed only) > config
/// file > built-in default.
struct RunConfig {
  TrainConfig train;
  std::string data_path;
  std::uint64_t split_seed = 7;
  std::string out_dir = ".";
  std::vector<std::size_t> eval_ks = {10, 20};
  std::size_t gate_k = 0;  // 0: use n (continuous-equivalent)

  static RunConfig from_config(const KeyValueConfig& cfg) {
    RunConfig rc;
    rc.train.dim = static_cast<std::size_t>(cfg.get_int("dim", 32));
    rc.train.loss = parse_loss(cfg.get("loss", "bpr-max"));
    rc.train.learning_rate = cfg.get_double("learning_rate", 0.05);
    rc.train.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", 64));
    rc.train.epochs = static_cast<std::size_t>(cfg.get_int("epochs", 100));
    rc.train.negatives_per_positive =
        static_cast<std::size_t>(cfg.get_int("negatives_per_positive", 0));
    rc.train.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 42));
    if (cfg.has("experts")) rc.train.roster = parse_roster(cfg.get("experts", ""));
    rc.train.variant = parse_variant(cfg.get("variant", "score"));
    rc.train.gate_input_mode = cfg.get("gate_input", "default") == "last-item"
                                   ? GateInputMode::kLastItem
                                   : GateInputMode::kPerExpertDefault;
    rc.train.max_session_len =
        static_cast<std::size_t>(cfg.get_int("max_session_len", 50));
    rc.train.patience = static_cast<std::size_t>(cfg.get_int("patience", 10));
    rc.train.uniform_gate = cfg.get_bool("uniform_gate", false);
    rc.train.gate_learning_rate = cfg.get_double("gate_learning_rate", -1.0);
    if (cfg.has("init_from")) rc.train.init_from = split_list(cfg.get("init_from", ""));
    rc.data_path = cfg.get("data", "");
    rc.split_seed = static_cast<std::uint64_t>(cfg.get_int("split_seed", 7));
    rc.out_dir = cfg.get("out_dir", ".");
    if (cfg.has("eval_ks")) {
      rc.eval_ks.clear();
      for (const auto& k : split_list(cfg.get("eval_ks", "")))
        rc.eval_ks.push_back(static_cast<std::size_t>(std::stoull(k)));
    }
    rc.gate_k = static_cast<std::size_t>(cfg.get_int("gate_k", 0));
    return rc;
  }

  /// COVE_SEED environment override (applied before explicit flags).
  void apply_env() {
    if (const char* env = std::getenv("COVE_SEED")) {
      try {
        train.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError("COVE_SEED is not an integer: " + std::string(env));
      }
    }
  }
};

}  // namespace cove
