#include "puray/run_config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace puray {

namespace {

[[noreturn]] void fail(const std::string& src, std::size_t line, const std::string& msg) {
  throw std::runtime_error(src + ": line " + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(const std::string& src, std::size_t line, const std::string& key,
               std::string_view value) {
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    fail(src, line, key + ": expected a number, got '" + std::string(value) + "'");
  return v;
}

bool parse_bool(const std::string& src, std::size_t line, const std::string& key,
                std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(src, line, key + ": expected true/false, got '" + std::string(value) + "'");
}

}  // namespace

TrainConfig parse_run_config_text(std::string_view text, const std::string& src) {
  TrainConfig cfg;
  bool have_mode = false;
  bool have_epochs = false, have_w_ms = false, have_w_tan = false;
  std::map<std::string, std::size_t> seen;

  std::istringstream stream{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(stream, raw)) {
    ++lineno;
    std::string_view line = raw;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail(src, lineno, "expected key=value");
    const std::string key{trim(line.substr(0, eq))};
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) fail(src, lineno, "empty key");
    if (value.empty()) fail(src, lineno, key + ": empty value");
    if (auto [it, inserted] = seen.emplace(key, lineno); !inserted)
      fail(src, lineno, "duplicate key '" + key + "' (first on line " +
                            std::to_string(it->second) + ")");

    if (key == "mode") {
      if (value == "supervised") cfg.mode = TrainMode::supervised;
      else if (value == "selfsup") cfg.mode = TrainMode::selfsup;
      else fail(src, lineno, "mode: expected supervised or selfsup");
      have_mode = true;
    } else if (key == "epochs") {
      cfg.epochs = parse_number<int>(src, lineno, key, value);
      if (cfg.epochs < 0) fail(src, lineno, "epochs: must be >= 0");
      have_epochs = true;
    } else if (key == "lr0") {
      cfg.lr0 = parse_number<double>(src, lineno, key, value);
      if (!(cfg.lr0 > 0.0)) fail(src, lineno, "lr0: must be > 0");
    } else if (key == "decay") {
      cfg.lr_decay = parse_number<double>(src, lineno, key, value);
      if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0))
        fail(src, lineno, "decay: must be in (0,1]");
    } else if (key == "w_ms") {
      cfg.weights.w_ms = parse_number<double>(src, lineno, key, value);
      if (cfg.weights.w_ms < 0.0) fail(src, lineno, "w_ms: must be >= 0");
      have_w_ms = true;
    } else if (key == "w_tan") {
      cfg.weights.w_tan = parse_number<double>(src, lineno, key, value);
      if (cfg.weights.w_tan < 0.0) fail(src, lineno, "w_tan: must be >= 0");
      have_w_tan = true;
    } else if (key == "origins") {
      cfg.origins = parse_number<int>(src, lineno, key, value);
      if (cfg.origins < 1) fail(src, lineno, "origins: must be >= 1");
    } else if (key == "k") {
      cfg.net.k = parse_number<int>(src, lineno, key, value);
      if (cfg.net.k < 1) fail(src, lineno, "k: must be >= 1");
    } else if (key == "c") {
      cfg.net.c = parse_number<int>(src, lineno, key, value);
      if (cfg.net.c < 1) fail(src, lineno, "c: must be >= 1");
    } else if (key == "M") {
      cfg.net.M = parse_number<int>(src, lineno, key, value);
      if (cfg.net.M < 0) fail(src, lineno, "M: must be >= 0");
    } else if (key == "hidden") {
      cfg.net.hidden = parse_number<int>(src, lineno, key, value);
      if (cfg.net.hidden < 1) fail(src, lineno, "hidden: must be >= 1");
    } else if (key == "depth") {
      cfg.net.depth = parse_number<int>(src, lineno, key, value);
      if (cfg.net.depth < 1) fail(src, lineno, "depth: must be >= 1");
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(src, lineno, key, value);
    } else if (key == "val_fraction") {
      cfg.val_fraction = parse_number<double>(src, lineno, key, value);
      if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0))
        fail(src, lineno, "val_fraction: must be in [0,1)");
    } else if (key == "include_query_in_patch") {
      cfg.include_query_in_patch = parse_bool(src, lineno, key, value);
    } else if (key == "origin_mode") {
      if (value == "axis_aligned") cfg.origin_mode = OriginMode::axis_aligned;
      else if (value == "eigen_frame") cfg.origin_mode = OriginMode::eigen_frame;
      else fail(src, lineno, "origin_mode: expected axis_aligned or eigen_frame");
    } else {
      fail(src, lineno, "unknown key '" + key + "'");
    }
  }

  if (!have_mode) throw std::runtime_error(src + ": missing required key 'mode'");
  const bool supervised = cfg.mode == TrainMode::supervised;
  if (!have_epochs) cfg.epochs = supervised ? 100 : 30;
  if (!have_w_ms) cfg.weights.w_ms = supervised ? 0.1 : 0.5;
  if (!have_w_tan) cfg.weights.w_tan = supervised ? 0.1 : 0.5;
  return cfg;
}

TrainConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str(), path.string());
}

}  // namespace puray
