#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wgmrf/circular.hpp"
#include "wgmrf/mesh.hpp"
#include "wgmrf/prediction.hpp"

namespace wgmrf::cli {

enum class AngleUnits { auto_detect, radians, degrees };

struct DatasetOptions {
  AngleUnits units = AngleUnits::auto_detect;
  bool allow_duplicates = false;
};

/// Sites with one observed direction each, read from
/// `lon,lat,direction_rad` (spherical) or `x,y,direction_rad` (planar).
struct Dataset {
  Mode mode = Mode::planar;
  std::vector<Location> locations;
  std::vector<Angle> angles;
  std::uint64_t hash = 0;
  std::vector<std::string> warnings;

  std::size_t size() const { return angles.size(); }
  Dataset subset(std::span<const int> rows) const;
};

Dataset read_dataset(const std::filesystem::path& path, const DatasetOptions& options = {});
void write_dataset(const Dataset& data, const std::filesystem::path& path);

/// First two columns of a CSV headed `lon,lat` or `x,y`; other columns are
/// ignored.
std::vector<Location> read_locations(const std::filesystem::path& path);

void write_predictions(std::span<const CircularPrediction> pred, Mode mode, const std::filesystem::path& path);
std::vector<CircularPrediction> read_predictions(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Run record: everything needed to rerun a command bitwise. Carries no
/// timestamps or absolute output paths.
struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  bool has_seed = false;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;

  void add_input(const std::filesystem::path& path);
  /// Keyed by file name.
  void add_output(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

std::string version();

}  // namespace wgmrf::cli
