#pragma once

#include <cstdint>

#include "granular/scene.hpp"

namespace granular {

/// Particles at rest inside a tall cylindrical container whose bottom cap is
/// the floor.
struct ColumnConfig
{
  size_t n_particles = 2000;
  /// <= 0 picks the radius that holds the particles in about `layers` lattice layers.
  double column_radius = 0.0;
  double layers = 6.0;
  double jitter = 0.2;
  uint64_t seed = 1;
  MaterialParams params;
};

Scene make_column_scene(const ColumnConfig& config);

/// A narrow jittered column released onto an open floor; it slumps into a
/// pile whose height depends on friction.
struct PileConfig
{
  size_t n_particles = 800;
  double footprint = 0.08;  ///< side of the square column base
  double jitter = 0.6;
  uint64_t seed = 1;
  MaterialParams params;
};

Scene make_pile_scene(const PileConfig& config);

/// Highest particle top (max z + r); 0 for an empty set.
double pile_peak_height(const ParticleSet& particles, double radius);

/// Cylindrical tower with helical gears on horizontal axes spinning at random
/// rates, an orifice plate near the bottom, and a cyclic vertical boundary.
struct GearTowerConfig
{
  size_t n_bodies = 4;
  size_t n_particles = 2000;
  uint64_t seed = 0;
  double height = 1.0;
  MaterialParams params;
};

Scene make_gear_tower_scene(const GearTowerConfig& config);

}  // namespace granular
