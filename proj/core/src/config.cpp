#include "msnet/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "msnet/error.hpp"

namespace msnet {

namespace {

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::islower(static_cast<unsigned char>(c)) ||
          std::isdigit(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      return false;
  }
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool segment_matches(std::string_view pattern, std::string_view value) {
  if (pattern == "#") {
    if (value.empty()) return false;
    for (char c : value)
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
  }
  return pattern == value;
}

bool key_matches(std::string_view pattern, std::string_view key) {
  std::size_t pi = 0, ki = 0;
  for (;;) {
    const std::size_t pe = pattern.find('.', pi);
    const std::size_t ke = key.find('.', ki);
    const std::string_view pseg = pattern.substr(pi, pe == std::string_view::npos ? pe : pe - pi);
    const std::string_view kseg = key.substr(ki, ke == std::string_view::npos ? ke : ke - ki);
    if (!segment_matches(pseg, kseg)) return false;
    if (pe == std::string_view::npos || ke == std::string_view::npos)
      return pe == std::string_view::npos && ke == std::string_view::npos;
    pi = pe + 1;
    ki = ke + 1;
  }
}

bool key_allowed(std::string_view key) {
  for (const std::string& pattern : config_schema())
    if (key_matches(pattern, key)) return true;
  return false;
}

}  // namespace

Config Config::parse_string(std::string_view text, std::string_view origin) {
  Config config;
  config.origin_ = std::string(origin);
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string_view::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw ConfigError(where + ": invalid section name '" +
                                               std::string(name) + "'");
      section = std::string(name);
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected 'key = value', got '" + std::string(line) + "'");
    const std::string_view key_part = trim(line.substr(0, eq));
    const std::string_view value_part = trim(line.substr(eq + 1));
    if (!valid_name(key_part))
      throw ConfigError(where + ": invalid key '" + std::string(key_part) + "'");
    if (section.empty()) throw ConfigError(where + ": key outside any [section]");

    const std::string full = section + "." + std::string(key_part);
    if (!key_allowed(full)) throw ConfigError(where + ": unknown key '" + full + "'");
    if (!config.values_.emplace(full, std::string(value_part)).second)
      throw ConfigError(where + ": duplicate key '" + full + "'");
  }
  return config;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

bool Config::has(std::string_view key) const { return values_.count(std::string(key)) > 0; }

std::string Config::raw(std::string_view key) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end())
    throw ConfigError(origin_ + ": missing required key '" + std::string(key) + "'");
  return it->second;
}

double Config::number(std::string_view key) const {
  const std::string v = raw(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + std::string(key) + "' is not a number: '" + v + "'");
  }
}

double Config::number(std::string_view key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

long long Config::integer(std::string_view key) const {
  const std::string v = raw(key);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError(origin_ + ": key '" + std::string(key) + "' is not an integer: '" + v +
                      "'");
  return out;
}

long long Config::integer(std::string_view key, long long fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool Config::flag(std::string_view key) const {
  const std::string v = raw(key);
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw ConfigError(origin_ + ": key '" + std::string(key) + "' is not a boolean: '" + v + "'");
}

bool Config::flag(std::string_view key, bool fallback) const {
  return has(key) ? flag(key) : fallback;
}

std::string Config::str(std::string_view key) const { return raw(key); }

std::string Config::str(std::string_view key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

std::vector<double> Config::numbers(std::string_view key) const {
  const std::string v = raw(key);
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t end = v.find(',', start);
    if (end == std::string::npos) end = v.size();
    const std::string item(trim(std::string_view(v).substr(start, end - start)));
    if (item.empty())
      throw ConfigError(origin_ + ": empty element in tuple '" + std::string(key) + "'");
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key '" + std::string(key) + "' has a non-numeric element '" +
                        item + "'");
    }
    start = end + 1;
  }
  return out;
}

std::vector<std::string> Config::list(std::string_view key) const {
  const std::string v = raw(key);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t end = v.find(',', start);
    if (end == std::string::npos) end = v.size();
    out.emplace_back(trim(std::string_view(v).substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::vector<std::string> Config::keys_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  const std::string p = std::string(prefix) + ".";
  for (const auto& [key, value] : values_)
    if (key.rfind(p, 0) == 0) out.push_back(key);
  return out;
}

std::string Config::canonical() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << '\n';
  return os.str();
}

const std::vector<std::string>& config_schema() {
  static const std::vector<std::string> schema = {
      // surrogate network
      "surrogate.rows", "surrogate.cols", "surrogate.width", "surrogate.height",
      "surrogate.structural", "surrogate.shear_main", "surrogate.shear_anti",
      "surrogate.bending", "surrogate.bending_stride",
      // source system
      "source.kind", "source.rows", "source.cols", "source.width", "source.height",
      "source.density", "source.dt", "source.duration", "source.damping",
      "source.structural", "source.shear_main", "source.shear_anti", "source.bending",
      "source.bending_stride", "source.layout", "source.layout_values", "source.fem_bending",
      "source.fem_poisson", "source.diagonal",
      // external forces
      "external.gravity", "external.rayleigh",
      // rollout sampling
      "rollouts.count", "rollouts.seed", "rollouts.anchor_radius_cells",
      "rollouts.random_angular_velocity", "rollouts.max_angular_speed",
      "rollouts.record_velocities",
      // clip set
      "clipset.length", "clipset.keep_fraction", "clipset.low_velocity_window",
      "clipset.low_velocity_keep", "clipset.seed",
      // training
      "train.curriculum", "train.stiffness_iterations", "train.damping_iterations",
      "train.joint_iterations", "train.batch", "train.seed", "train.k_scale", "train.b_scale",
      "train.jitter", "train.lr_k", "train.lr_b", "train.beta1", "train.beta2", "train.epsilon",
      "train.threads", "train.checkpoint_stride", "train.checkpoint_every",
      "train.stiffness_loss.lambda_f", "train.stiffness_loss.lambda_j",
      "train.stiffness_loss.lambda_pos", "train.stiffness_loss.lambda_k_neg",
      "train.stiffness_loss.lambda_b_neg",
      "train.damping_loss.lambda_f", "train.damping_loss.lambda_j",
      "train.damping_loss.lambda_pos", "train.damping_loss.lambda_k_neg",
      "train.damping_loss.lambda_b_neg",
      "train.joint_loss.lambda_f", "train.joint_loss.lambda_j", "train.joint_loss.lambda_pos",
      "train.joint_loss.lambda_k_neg", "train.joint_loss.lambda_b_neg",
      // evaluation
      "eval.per_coordinate", "eval.truth_model",
      // simulate scenarios
      "scenario.name", "scenario.mode", "scenario.duration", "scenario.dt", "scenario.seed",
      "scenario.rotate", "scenario.drop_height", "scenario.settle_speed",
      "scenario.anchor_radius_cells",
      "scenario.sphere.#.center", "scenario.sphere.#.radius",
      "scenario.plane.#.point", "scenario.plane.#.normal",
      "scenario.box.#.lo", "scenario.box.#.hi",
      // fold experiments
      "fold.size", "fold.density", "fold.membrane", "fold.bending", "fold.poisson",
      "fold.rayleigh", "fold.dt", "fold.duration_cap", "fold.speed_tolerance",
      "fold.sustain_steps",
  };
  return schema;
}

}  // namespace msnet
