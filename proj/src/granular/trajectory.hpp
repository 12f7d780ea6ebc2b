#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "granular/scene.hpp"

namespace granular {

/// Binary trajectory: a fixed header followed by snapshots of float32
/// positions (and optionally velocities), all little-endian.
///
///   char[8]  "GGTRAJ01"
///   u32      version (1)
///   u32      flags (bit 0: velocities present)
///   u64      particle count
///   f64      timestep
///   u64      stride
///   per snapshot: u64 step, f64 time, f32[3n] positions, [f32[3n] velocities]
struct TrajectoryHeader
{
  uint32_t version = 1;
  bool has_velocities = false;
  uint64_t particle_count = 0;
  double timestep = 0.0;
  uint64_t stride = 1;
};

struct TrajectoryFrame
{
  uint64_t step = 0;
  double time = 0.0;
  std::vector<float> positions;   ///< 3n, row-major
  std::vector<float> velocities;  ///< empty unless the header has velocities
};

class TrajectoryWriter
{
public:
  TrajectoryWriter(const std::filesystem::path& path, const TrajectoryHeader& header);
  void write(uint64_t step, double time, const ParticleSet& particles);
  void flush();
  uint64_t frames_written() const noexcept { return frames_; }

private:
  std::ofstream out_;
  TrajectoryHeader header_;
  uint64_t frames_ = 0;
};

class TrajectoryReader
{
public:
  explicit TrajectoryReader(const std::filesystem::path& path);
  const TrajectoryHeader& header() const noexcept { return header_; }
  std::optional<TrajectoryFrame> next();

private:
  std::ifstream in_;
  TrajectoryHeader header_;
};

}  // namespace granular
