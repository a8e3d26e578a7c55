#pragma once

// Binary little-endian PLY with float32 positions and uint8 colors.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "panodense/errors.hpp"
#include "panodense/fusion.hpp"

namespace panodense {

static_assert(std::endian::native == std::endian::little, "PLY output assumes a little-endian host");

inline void write_ply(const std::filesystem::path& path, const FusedCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "ply\n"
      << "format binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  std::string record(15, '\0');
  for (const auto& p : cloud.points) {
    const float xyz[3] = {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                          static_cast<float>(p.position.z())};
    std::memcpy(record.data(), xyz, sizeof(xyz));
    record[12] = static_cast<char>(p.color.r);
    record[13] = static_cast<char>(p.color.g);
    record[14] = static_cast<char>(p.color.b);
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

/// Reads files produced by write_ply. Source ids are not stored and come back
/// as 0.
inline FusedCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t count = 0;
  bool binary = false;
  int properties = 0;
  std::getline(in, line);
  if (line != "ply") throw IoError(path.string() + ": not a PLY file");
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      binary = fmt == "binary_little_endian";
    } else if (key == "element") {
      std::string name;
      ss >> name >> count;
      if (name != "vertex") throw IoError(path.string() + ": unexpected element '" + name + "'");
    } else if (key == "property") {
      ++properties;
    }
  }
  if (!binary || properties != 6) {
    throw IoError(path.string() + ": expected binary_little_endian with x,y,z float and red,green,blue uchar");
  }
  FusedCloud cloud;
  cloud.points.reserve(count);
  char record[15];
  for (std::size_t i = 0; i < count; ++i) {
    if (!in.read(record, sizeof(record))) throw IoError(path.string() + ": truncated vertex data");
    float xyz[3];
    std::memcpy(xyz, record, sizeof(xyz));
    CloudPoint p;
    p.position = Vec3(xyz[0], xyz[1], xyz[2]);
    p.color = {static_cast<std::uint8_t>(record[12]), static_cast<std::uint8_t>(record[13]),
               static_cast<std::uint8_t>(record[14])};
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace panodense
