#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cdgan/checkpoint.hpp"
#include "cdgan/error.hpp"
#include "cdgan/networks.hpp"
#include "cdgan/trainer.hpp"

namespace cdgan {

// Flat key=value sections:
//
//   [arch]
//   image_size = 32
//   [train]
//   variant = "cd-GAN"
//
// Keys are addressed as "section.key". Only keys in the schema are accepted;
// overrides ("train.batch_size=8") are applied after the file and win.
class RunConfig {
 public:
  enum class Kind { Int, Real, Bool, String };

  struct Entry {
    std::string key;
    Kind kind;
    std::string value;
  };

  RunConfig() : entries_(schema()) {}

  static RunConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig c;
    c.parse(ss.str(), path.string());
    return c;
  }

  static RunConfig from_string(const std::string& text) {
    RunConfig c;
    c.parse(text, "<string>");
    return c;
  }

  // "section.key=value"
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    }
    set(trim(assignment.substr(0, eq)), unquote(trim(assignment.substr(eq + 1))), "override");
  }

  void set(const std::string& key, const std::string& value, const std::string& origin = "api") {
    Entry& e = find(key, origin);
    check_value(e, value, origin);
    e.value = value;
  }

  [[nodiscard]] const std::string& get(const std::string& key) const {
    for (const auto& e : entries_) {
      if (e.key == key) return e.value;
    }
    throw ConfigError("unknown config key '" + key + "'");
  }
  [[nodiscard]] long long get_int(const std::string& key) const { return std::stoll(get(key)); }
  [[nodiscard]] double get_real(const std::string& key) const { return std::stod(get(key)); }
  [[nodiscard]] bool get_bool(const std::string& key) const { return get(key) == "true"; }

  // Canonical text; feeding it back through from_string reproduces this config.
  [[nodiscard]] std::string to_toml() const {
    std::ostringstream os;
    std::string section;
    for (const auto& e : entries_) {
      const auto dot = e.key.find('.');
      const std::string sec = e.key.substr(0, dot);
      if (sec != section) {
        if (!section.empty()) os << '\n';
        os << '[' << sec << "]\n";
        section = sec;
      }
      os << e.key.substr(dot + 1) << " = ";
      if (e.kind == Kind::String) {
        os << '"' << e.value << '"';
      } else {
        os << e.value;
      }
      os << '\n';
    }
    return os.str();
  }

  [[nodiscard]] std::string hash() const {
    const std::string text = to_toml();
    return hex64(fnv1a64(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  [[nodiscard]] ArchConfig arch() const {
    ArchConfig a = ArchConfig::for_image_size(static_cast<int>(get_int("arch.image_size")));
    a.base_width = static_cast<int>(get_int("arch.base_width"));
    a.di_channels = static_cast<int>(get_int("arch.di_channels"));
    a.ds_dim = static_cast<int>(get_int("arch.ds_dim"));
    a.leaky_slope = get_real("arch.leaky_slope");
    a.validate();
    return a;
  }

  [[nodiscard]] TrainConfig train() const {
    TrainConfig t;
    t.variant = parse_variant(get("train.variant"));
    t.mode = parse_mode(get("train.mode"));
    t.learning_rate = get_real("train.learning_rate");
    t.adam_beta1 = get_real("train.adam_beta1");
    t.adam_beta2 = get_real("train.adam_beta2");
    t.batch_size = static_cast<int>(get_int("train.batch_size"));
    t.total_steps = get_int("train.total_steps");
    t.seed = static_cast<std::uint64_t>(get_int("train.seed"));
    t.saturating_gan = get_bool("train.saturating_gan");
    t.checkpoint_every = get_int("train.checkpoint_every");
    t.validate();
    return t;
  }

  [[nodiscard]] const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  static std::vector<Entry> schema() {
    const TrainConfig t;
    const ArchConfig a;
    return {
        {"arch.image_size", Kind::Int, std::to_string(a.image_size)},
        {"arch.base_width", Kind::Int, std::to_string(a.base_width)},
        {"arch.di_channels", Kind::Int, std::to_string(a.di_channels)},
        {"arch.ds_dim", Kind::Int, std::to_string(a.ds_dim)},
        {"arch.leaky_slope", Kind::Real, "0.2"},
        {"train.variant", Kind::String, to_string(t.variant)},
        {"train.mode", Kind::String, to_string(t.mode)},
        {"train.learning_rate", Kind::Real, "0.0002"},
        {"train.adam_beta1", Kind::Real, "0.5"},
        {"train.adam_beta2", Kind::Real, "0.999"},
        {"train.batch_size", Kind::Int, std::to_string(t.batch_size)},
        {"train.total_steps", Kind::Int, "1000"},
        {"train.seed", Kind::Int, "0"},
        {"train.saturating_gan", Kind::Bool, "false"},
        {"train.checkpoint_every", Kind::Int, "500"},
        {"data.root", Kind::String, "data"},
    };
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
  }

  Entry& find(const std::string& key, const std::string& origin) {
    for (auto& e : entries_) {
      if (e.key == key) return e;
    }
    std::string valid;
    for (const auto& e : entries_) valid += (valid.empty() ? "" : ", ") + e.key;
    throw ConfigError(origin + ": unknown config key '" + key + "' (valid: " + valid + ")");
  }

  static void check_value(const Entry& e, const std::string& v, const std::string& origin) {
    const auto bad = [&](const char* what) {
      throw ConfigError(origin + ": " + e.key + " expects " + what + ", got '" + v + "'");
    };
    switch (e.kind) {
      case Kind::Int: {
        long long x = 0;
        const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc{} || p != v.data() + v.size()) bad("an integer");
        break;
      }
      case Kind::Real: {
        std::size_t used = 0;
        try {
          (void)std::stod(v, &used);
        } catch (const std::exception&) {
          bad("a number");
        }
        if (used != v.size()) bad("a number");
        break;
      }
      case Kind::Bool:
        if (v != "true" && v != "false") bad("true or false");
        break;
      case Kind::String:
        if (v.find('"') != std::string::npos || v.find('\n') != std::string::npos) bad("a plain string");
        break;
    }
  }

  void parse(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = origin + ":" + std::to_string(lineno);
      bool quoted = false;
      for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) {
          line.resize(i);
          break;
        }
      }
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any [section]");
      set(section + "." + key, unquote(trim(line.substr(eq + 1))), where);
    }
  }

  std::vector<Entry> entries_;
};

}  // namespace cdgan
