// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Flat `key = value` config text with `#` comments, mapped onto TrainConfig
// and SceneSpec. Errors carry the source name and line number.

#ifndef DUALSPLAT_IO_CONFIG_HPP_
#define DUALSPLAT_IO_CONFIG_HPP_

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dualsplat/synth.hpp"
#include "dualsplat/trainer.hpp"

namespace dualsplat::io {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

/// Setter and getter for one named field of T.
template <typename T>
struct Field {
  std::function<bool(T&, std::string_view)> set;
  std::function<std::string(const T&)> get;
};

template <typename T, typename V>
Field<T> number_field(V T::*member) {
  return {[member](T& t, std::string_view s) { return parse_number(s, t.*member); },
          [member](const T& t) {
            if constexpr (std::is_floating_point_v<V>) return format_double(t.*member);
            else return std::to_string(t.*member);
          }};
}

template <typename T>
Field<T> vec3_field(Vec3 T::*member) {
  return {[member](T& t, std::string_view s) {
            std::istringstream in{std::string(s)};
            std::string a, b, c, extra;
            if (!(in >> a >> b >> c) || (in >> extra)) return false;
            Vec3 v;
            if (!parse_number(a, v.x()) || !parse_number(b, v.y()) || !parse_number(c, v.z())) return false;
            t.*member = v;
            return true;
          },
          [member](const T& t) {
            const Vec3& v = t.*member;
            return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
          }};
}

inline const std::map<std::string, Field<TrainConfig>>& train_fields() {
  using C = TrainConfig;
  static const std::map<std::string, Field<C>> fields = {
      {"total_iters", number_field(&C::total_iters)},
      {"stage2_start", number_field(&C::stage2_start)},
      {"m_objects", number_field(&C::m_objects)},
      {"lambda_o", number_field(&C::lambda_o)},
      {"lambda_ssim", number_field(&C::lambda_ssim)},
      {"lr_position_init", number_field(&C::lr_position_init)},
      {"lr_position_final", number_field(&C::lr_position_final)},
      {"lr_sh", number_field(&C::lr_sh)},
      {"lr_opacity", number_field(&C::lr_opacity)},
      {"lr_instance_opacity", number_field(&C::lr_instance_opacity)},
      {"lr_rotation", number_field(&C::lr_rotation)},
      {"lr_scale", number_field(&C::lr_scale)},
      {"densify_from", number_field(&C::densify_from)},
      {"densify_interval", number_field(&C::densify_interval)},
      {"densify_until", number_field(&C::densify_until)},
      {"grad_threshold", number_field(&C::grad_threshold)},
      {"percent_dense", number_field(&C::percent_dense)},
      {"prune_opacity_threshold", number_field(&C::prune_opacity_threshold)},
      {"prune_scale_fraction", number_field(&C::prune_scale_fraction)},
      {"opacity_reset_interval", number_field(&C::opacity_reset_interval)},
      {"stage2_reset_gap", number_field(&C::stage2_reset_gap)},
      {"seed", number_field(&C::seed)},
      {"workers", number_field(&C::workers)},
      {"tile_size", number_field(&C::tile_size)},
      {"background", vec3_field(&C::background)},
      {"log_interval", number_field(&C::log_interval)},
      {"instrument_interval", number_field(&C::instrument_interval)},
  };
  return fields;
}

inline const std::map<std::string, Field<SceneSpec>>& scene_fields() {
  using S = SceneSpec;
  static const std::map<std::string, Field<S>> fields = {
      {"objects", number_field(&S::objects)},
      {"gaussians_per_object", number_field(&S::gaussians_per_object)},
      {"floaters", number_field(&S::floaters)},
      {"seed", number_field(&S::seed)},
      {"views", number_field(&S::views)},
      {"eval_stride", number_field(&S::eval_stride)},
      {"width", number_field(&S::width)},
      {"height", number_field(&S::height)},
      {"focal", number_field(&S::focal)},
      {"ring_radius", number_field(&S::ring_radius)},
      {"ring_height", number_field(&S::ring_height)},
      {"object_radius", number_field(&S::object_radius)},
      {"layout_radius", number_field(&S::layout_radius)},
      {"surfel_flatness", number_field(&S::surfel_flatness)},
      {"floater_opacity_min", number_field(&S::floater_opacity_min)},
      {"floater_opacity_max", number_field(&S::floater_opacity_max)},
      {"floater_scale", number_field(&S::floater_scale)},
      {"floater_offset", number_field(&S::floater_offset)},
      {"floater_stamp_radius", number_field(&S::floater_stamp_radius)},
      {"id_maps",
       {[](S& s, std::string_view v) {
          if (v == "occupancy") s.id_maps = IdMapSource::kOccupancy;
          else if (v == "instance_map") s.id_maps = IdMapSource::kInstanceMap;
          else return false;
          return true;
        },
        [](const S& s) {
          return std::string(s.id_maps == IdMapSource::kOccupancy ? "occupancy" : "instance_map");
        }}},
  };
  return fields;
}

template <typename T>
void apply_fields(const std::map<std::string, Field<T>>& fields, const std::vector<ConfigEntry>& entries,
                  const std::string& source, T& target) {
  for (const auto& e : entries) {
    const auto it = fields.find(e.key);
    const std::string where = source + ":" + std::to_string(e.line) + ": ";
    if (it == fields.end()) throw ConfigError(where + "unknown key '" + e.key + "'");
    if (!it->second.set(target, e.value)) {
      throw ConfigError(where + "invalid value '" + e.value + "' for '" + e.key + "'");
    }
  }
}

template <typename T>
std::string echo_fields(const std::map<std::string, Field<T>>& fields, const T& value) {
  std::string out;
  for (const auto& [key, f] : fields) out += key + " = " + f.get(value) + "\n";
  return out;
}

}  // namespace detail

/// Splits text into entries. Blank lines and `#` comments are skipped; a
/// repeated key is an error.
inline std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& source = "config") {
  std::vector<ConfigEntry> entries;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const std::string where = source + ":" + std::to_string(line) + ": ";
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    ConfigEntry e{std::string(detail::trim(s.substr(0, eq))), std::string(detail::trim(s.substr(eq + 1))), line};
    if (e.key.empty()) throw ConfigError(where + "missing key");
    if (e.value.empty()) throw ConfigError(where + "missing value for '" + e.key + "'");
    if (const auto [it, fresh] = seen.emplace(e.key, line); !fresh) {
      throw ConfigError(where + "duplicate key '" + e.key + "' (first set on line " + std::to_string(it->second) +
                        ")");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<ConfigEntry> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Overrides fields of `config`; the result is validated.
inline void apply_train_config(const std::vector<ConfigEntry>& entries, TrainConfig& config,
                               const std::string& source = "config") {
  detail::apply_fields(detail::train_fields(), entries, source, config);
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline void apply_scene_spec(const std::vector<ConfigEntry>& entries, SceneSpec& spec,
                             const std::string& source = "config") {
  detail::apply_fields(detail::scene_fields(), entries, source, spec);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

/// Every field as `key = value` lines, sorted by key; parses back to the
/// same config.
inline std::string echo_train_config(const TrainConfig& config) {
  return detail::echo_fields(detail::train_fields(), config);
}

inline std::string echo_scene_spec(const SceneSpec& spec) { return detail::echo_fields(detail::scene_fields(), spec); }

}  // namespace dualsplat::io

#endif  // DUALSPLAT_IO_CONFIG_HPP_
