// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoints as binary little-endian PLY. Geometry and appearance use the
// property names common splat viewers expect; instance_opacity and label are
// appended. Version 1 files (no instance fields) load as pre-stage-2 clouds.

#ifndef DUALSPLAT_IO_CHECKPOINT_HPP_
#define DUALSPLAT_IO_CHECKPOINT_HPP_

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/scene.hpp"

namespace dualsplat::io {

inline constexpr int kCheckpointVersion = 2;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const unsigned char* p) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline int ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

// Sample of a scalar property as double (exact for every 32-bit type).
inline double read_ply_scalar(const std::string& t, const unsigned char* p) {
  if (t == "float" || t == "float32") return get_le<float>(p);
  if (t == "double" || t == "float64") return get_le<double>(p);
  if (t == "int" || t == "int32") return get_le<std::int32_t>(p);
  if (t == "uint" || t == "uint32") return get_le<std::uint32_t>(p);
  if (t == "short" || t == "int16") return get_le<std::int16_t>(p);
  if (t == "ushort" || t == "uint16") return get_le<std::uint16_t>(p);
  if (t == "char" || t == "int8") return static_cast<std::int8_t>(*p);
  return *p;
}

inline std::vector<std::string> property_names(int sh_degree, bool with_instance) {
  std::vector<std::string> names = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
  const int rest = 3 * (sh_coeff_count(sh_degree) - 1);
  for (int k = 0; k < rest; ++k) names.push_back("f_rest_" + std::to_string(k));
  for (const char* n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
    names.emplace_back(n);
  }
  if (with_instance) {
    names.emplace_back("instance_opacity");
    names.emplace_back("label");
  }
  return names;
}

// Storage is [coeff][channel]; f_rest is channel-major over the non-DC
// coefficients, as splat viewers read it.
inline std::size_t sh_storage_index(int sh_degree, int rest_index) {
  const int per_channel = sh_coeff_count(sh_degree) - 1;
  const int ch = rest_index / per_channel;
  const int k = 1 + rest_index % per_channel;
  return static_cast<std::size_t>(3 * k + ch);
}

}  // namespace detail

/// Serializes the cloud to PLY bytes.
inline std::string encode_checkpoint(const GaussianCloud& cloud) {
  cloud.validate();
  const auto names = detail::property_names(cloud.sh_degree, true);
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "comment dualsplat_version " << kCheckpointVersion << "\n"
         << "comment sh_degree " << cloud.sh_degree << "\n"
         << "comment object_count " << cloud.object_count << "\n"
         << "comment instance_ready " << (cloud.instance_ready ? 1 : 0) << "\n"
         << "element vertex " << cloud.size() << "\n";
  for (const auto& n : names) header << "property " << (n == "label" ? "int" : "float") << " " << n << "\n";
  header << "end_header\n";

  std::string out = header.str();
  const int rest = 3 * (cloud.sh_count() - 1);
  out.reserve(out.size() + cloud.size() * names.size() * 4);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto sh = cloud.sh(i);
    for (int a = 0; a < 3; ++a) detail::put_le(out, cloud.positions[3 * i + a]);
    for (int c = 0; c < 3; ++c) detail::put_le(out, sh[c]);
    for (int k = 0; k < rest; ++k) detail::put_le(out, sh[detail::sh_storage_index(cloud.sh_degree, k)]);
    detail::put_le(out, cloud.opacity_logits[i]);
    for (int a = 0; a < 3; ++a) detail::put_le(out, cloud.log_scales[3 * i + a]);
    for (int a = 0; a < 4; ++a) detail::put_le(out, cloud.rotations[4 * i + a]);
    detail::put_le(out, cloud.instance_opacity_logits[i]);
    detail::put_le(out, static_cast<std::int32_t>(cloud.labels[i]));
  }
  return out;
}

inline GaussianCloud decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  const auto fail = [&](const std::string& m) -> void { throw std::runtime_error(what + ": " + m); };
  const std::size_t end = bytes.find("end_header\n");
  if (bytes.rfind("ply\n", 0) != 0 || end == std::string::npos) fail("not a PLY file");
  std::istringstream header(bytes.substr(0, end));
  const std::size_t data_start = end + std::string("end_header\n").size();

  int version = 1;
  int sh_degree = -1;
  int object_count = 0;
  int instance_ready = -1;
  long long count = -1;
  bool in_vertex = false;
  std::vector<std::pair<std::string, std::string>> props;  // (type, name)
  std::string line;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") fail("only binary_little_endian PLY is supported");
    } else if (kw == "comment") {
      std::string key;
      ls >> key;
      if (key == "dualsplat_version") ls >> version;
      if (key == "sh_degree") ls >> sh_degree;
      if (key == "object_count") ls >> object_count;
      if (key == "instance_ready") ls >> instance_ready;
    } else if (kw == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
      else fail("unexpected element '" + name + "'");
    } else if (kw == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") fail("list properties are not supported");
      if (detail::ply_type_size(type) == 0) fail("unknown property type '" + type + "'");
      props.emplace_back(type, name);
    }
  }
  if (version < 1 || version > kCheckpointVersion) fail("unsupported format version " + std::to_string(version));
  if (count < 0) fail("missing vertex element");

  std::map<std::string, std::pair<std::string, std::size_t>> layout;
  std::size_t stride = 0;
  for (const auto& [type, name] : props) {
    layout[name] = {type, stride};
    stride += static_cast<std::size_t>(detail::ply_type_size(type));
  }
  if (sh_degree < 0) {
    // Infer from the f_rest count when the comment is absent.
    int rest = 0;
    while (layout.count("f_rest_" + std::to_string(rest))) ++rest;
    for (int d = 0; d <= kMaxShDegree; ++d) {
      if (3 * (sh_coeff_count(d) - 1) == rest) sh_degree = d;
    }
    if (sh_degree < 0) fail("cannot infer SH degree from " + std::to_string(rest) + " f_rest properties");
  }
  if (sh_degree > kMaxShDegree) fail("SH degree " + std::to_string(sh_degree) + " out of range");
  const bool with_instance = version >= 2;
  for (const auto& n : detail::property_names(sh_degree, with_instance)) {
    if (!layout.count(n)) fail("missing property '" + n + "'");
  }
  if (bytes.size() - data_start < static_cast<std::size_t>(count) * stride) fail("truncated vertex data");

  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  cloud.object_count = with_instance ? object_count : 0;
  cloud.instance_ready = with_instance && instance_ready != 0;
  cloud.resize(static_cast<std::size_t>(count));
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + data_start;
  const auto getf = [&](const unsigned char* rec, const std::string& name) {
    const auto& [type, off] = layout.at(name);
    if (type == "float" || type == "float32") return detail::get_le<float>(rec + off);
    return static_cast<float>(detail::read_ply_scalar(type, rec + off));
  };
  const int rest = 3 * (cloud.sh_count() - 1);
  const std::size_t sh_w = 3 * static_cast<std::size_t>(cloud.sh_count());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const unsigned char* rec = base + i * stride;
    cloud.positions[3 * i] = getf(rec, "x");
    cloud.positions[3 * i + 1] = getf(rec, "y");
    cloud.positions[3 * i + 2] = getf(rec, "z");
    for (int c = 0; c < 3; ++c) cloud.sh_coeffs[sh_w * i + c] = getf(rec, "f_dc_" + std::to_string(c));
    for (int k = 0; k < rest; ++k) {
      cloud.sh_coeffs[sh_w * i + detail::sh_storage_index(sh_degree, k)] = getf(rec, "f_rest_" + std::to_string(k));
    }
    cloud.opacity_logits[i] = getf(rec, "opacity");
    for (int a = 0; a < 3; ++a) cloud.log_scales[3 * i + a] = getf(rec, "scale_" + std::to_string(a));
    for (int a = 0; a < 4; ++a) cloud.rotations[4 * i + a] = getf(rec, "rot_" + std::to_string(a));
    if (with_instance) {
      cloud.instance_opacity_logits[i] = getf(rec, "instance_opacity");
      const auto& [type, off] = layout.at("label");
      cloud.labels[i] = static_cast<std::int32_t>(detail::read_ply_scalar(type, rec + off));
    }
  }
  try {
    cloud.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  return cloud;
}

inline void save_checkpoint(const std::string& path, const GaussianCloud& cloud) {
  const std::string bytes = encode_checkpoint(cloud);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline GaussianCloud load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str(), path);
}

}  // namespace dualsplat::io

#endif  // DUALSPLAT_IO_CHECKPOINT_HPP_
