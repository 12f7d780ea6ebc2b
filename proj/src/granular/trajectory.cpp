#include "granular/trajectory.hpp"

#include <bit>
#include <cstring>

#include "granular/error.hpp"

namespace granular {
namespace {

constexpr char kMagic[8] = {'G', 'G', 'T', 'R', 'A', 'J', '0', '1'};

template <typename T>
void put(std::ostream& out, T value)
{
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& value)
{
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<size_t>(in.gcount()) == sizeof(T);
}

void put_vectors(std::ostream& out, const std::vector<Vec3>& xs)
{
  std::vector<float> buf(xs.size() * 3);
  for (size_t i = 0; i < xs.size(); ++i)
    for (size_t k = 0; k < 3; ++k)
      buf[3 * i + k] = static_cast<float>(xs[i][k]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

}  // namespace

TrajectoryWriter::TrajectoryWriter(const std::filesystem::path& path, const TrajectoryHeader& header)
    : out_(path, std::ios::binary | std::ios::trunc), header_(header)
{
  if (!out_)
    fail(ErrorKind::Io, "cannot open trajectory file for writing: " + path.string());
  out_.write(kMagic, sizeof(kMagic));
  put<uint32_t>(out_, header_.version);
  put<uint32_t>(out_, header_.has_velocities ? 1u : 0u);
  put<uint64_t>(out_, header_.particle_count);
  put<double>(out_, header_.timestep);
  put<uint64_t>(out_, header_.stride);
}

void TrajectoryWriter::write(uint64_t step, double time, const ParticleSet& particles)
{
  if (particles.size() != header_.particle_count)
    fail(ErrorKind::State, "particle count changed during trajectory recording");
  put<uint64_t>(out_, step);
  put<double>(out_, time);
  put_vectors(out_, particles.positions);
  if (header_.has_velocities)
    put_vectors(out_, particles.velocities);
  if (!out_)
    fail(ErrorKind::Io, "trajectory write failed");
  ++frames_;
}

void TrajectoryWriter::flush()
{
  out_.flush();
}

TrajectoryReader::TrajectoryReader(const std::filesystem::path& path) : in_(path, std::ios::binary)
{
  if (!in_)
    fail(ErrorKind::Io, "cannot open trajectory file: " + path.string());
  char magic[8];
  in_.read(magic, sizeof(magic));
  if (in_.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail(ErrorKind::Parse, "not a trajectory file: " + path.string());
  uint32_t flags = 0;
  if (!get(in_, header_.version) || !get(in_, flags) || !get(in_, header_.particle_count) ||
      !get(in_, header_.timestep) || !get(in_, header_.stride))
    fail(ErrorKind::Parse, "truncated trajectory header: " + path.string());
  if (header_.version != 1)
    fail(ErrorKind::Parse, "unsupported trajectory version " + std::to_string(header_.version));
  header_.has_velocities = (flags & 1u) != 0;
}

std::optional<TrajectoryFrame> TrajectoryReader::next()
{
  TrajectoryFrame f;
  if (!get(in_, f.step))
    return std::nullopt;
  if (!get(in_, f.time))
    fail(ErrorKind::Parse, "truncated trajectory frame");
  const size_t count = header_.particle_count * 3;
  auto read_block = [&](std::vector<float>& dst) {
    dst.resize(count);
    in_.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<size_t>(in_.gcount()) != count * sizeof(float))
      fail(ErrorKind::Parse, "truncated trajectory frame");
  };
  read_block(f.positions);
  if (header_.has_velocities)
    read_block(f.velocities);
  return f;
}

}  // namespace granular
