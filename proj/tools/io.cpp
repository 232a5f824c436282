#include "io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "wgmrf/errors.hpp"

namespace wgmrf::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& field, const std::string& src, std::size_t line) {
  double v = 0.0;
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ParseError(src, line, "not a finite number: '" + field + "'");
  return v;
}

struct CsvReader {
  std::ifstream in;
  std::string src;
  std::size_t line_no = 0;

  explicit CsvReader(const std::filesystem::path& path) : in(path), src(path.string()) {
    if (!in) throw InvalidArgument("cannot open " + src);
  }
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      fields = split(line);
      return true;
    }
    return false;
  }
};

Mode mode_from_header(const std::vector<std::string>& h, const std::string& src) {
  if (h.size() >= 2 && h[0] == "lon" && h[1] == "lat") return Mode::spherical;
  if (h.size() >= 2 && h[0] == "x" && h[1] == "y") return Mode::planar;
  throw ParseError(src, 1, "header must start with lon,lat or x,y");
}

Location make_location(Mode mode, double a, double b, const std::string& src, std::size_t line) {
  try {
    return mode == Mode::spherical ? Location::spherical(a, b) : Location::planar(a, b);
  } catch (const InvalidArgument& e) {
    throw ParseError(src, line, e.what());
  }
}

const char* coord_header(Mode mode) { return mode == Mode::spherical ? "lon,lat" : "x,y"; }

}  // namespace

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset out;
  out.mode = mode;
  out.hash = hash;
  out.locations.reserve(rows.size());
  out.angles.reserve(rows.size());
  for (int i : rows) {
    out.locations.push_back(locations[i]);
    out.angles.push_back(angles[i]);
  }
  return out;
}

Dataset read_dataset(const std::filesystem::path& path, const DatasetOptions& options) {
  CsvReader csv(path);
  std::vector<std::string> f;
  if (!csv.next(f)) throw ParseError(csv.src, 1, "empty dataset");
  Dataset d;
  d.mode = mode_from_header(f, csv.src);
  if (f.size() != 3 || f[2] != "direction_rad")
    throw ParseError(csv.src, csv.line_no, std::string("expected header ") + coord_header(d.mode) + ",direction_rad");
  std::vector<double> raw;
  std::vector<std::size_t> lines;
  while (csv.next(f)) {
    if (f.size() != 3) throw ParseError(csv.src, csv.line_no, "expected 3 fields, got " + std::to_string(f.size()));
    const double a = parse_double(f[0], csv.src, csv.line_no);
    const double b = parse_double(f[1], csv.src, csv.line_no);
    d.locations.push_back(make_location(d.mode, a, b, csv.src, csv.line_no));
    raw.push_back(parse_double(f[2], csv.src, csv.line_no));
    lines.push_back(csv.line_no);
  }
  if (raw.empty()) throw ParseError(csv.src, csv.line_no, "dataset has no rows");

  double max_abs = 0.0;
  for (double v : raw) max_abs = std::max(max_abs, std::abs(v));
  if (options.units == AngleUnits::auto_detect && max_abs > kTwoPi + 1e-9) {
    std::ostringstream msg;
    msg << "directions reach " << max_abs << ", beyond 2pi; the column looks like degrees"
        << " (pass --units degrees to convert or --units radians to wrap)";
    throw InvalidArgument(csv.src + ": " + msg.str());
  }
  const double scale = options.units == AngleUnits::degrees ? kPi / 180.0 : 1.0;
  std::size_t wrapped = 0;
  for (double v : raw) {
    const double r = v * scale;
    if (r < 0.0 || r >= kTwoPi) ++wrapped;
    d.angles.emplace_back(r);
  }
  if (wrapped > 0)
    d.warnings.push_back(std::to_string(wrapped) + " direction(s) outside [0, 2pi) were wrapped");

  if (!options.allow_duplicates) {
    std::set<std::pair<double, double>> seen;
    for (std::size_t i = 0; i < d.locations.size(); ++i)
      if (!seen.emplace(d.locations[i].x, d.locations[i].y).second)
        throw ParseError(csv.src, lines[i], "duplicate coordinates (pass --allow-duplicates to keep them)");
  }
  d.hash = hash_file(path);
  return d;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ResourceLimit("cannot write " + path.string());
  out.precision(17);
  out << coord_header(data.mode) << ",direction_rad\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    out << data.locations[i].x << ',' << data.locations[i].y << ',' << data.angles[i].value() << '\n';
}

std::vector<Location> read_locations(const std::filesystem::path& path) {
  CsvReader csv(path);
  std::vector<std::string> f;
  if (!csv.next(f)) throw ParseError(csv.src, 1, "empty locations file");
  const Mode mode = mode_from_header(f, csv.src);
  const std::size_t width = f.size();
  std::vector<Location> out;
  while (csv.next(f)) {
    if (f.size() != width) throw ParseError(csv.src, csv.line_no, "row width differs from header");
    out.push_back(make_location(mode, parse_double(f[0], csv.src, csv.line_no),
                                parse_double(f[1], csv.src, csv.line_no), csv.src, csv.line_no));
  }
  if (out.empty()) throw ParseError(csv.src, csv.line_no, "no locations");
  return out;
}

void write_predictions(std::span<const CircularPrediction> pred, Mode mode, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ResourceLimit("cannot write " + path.string());
  out.precision(17);
  out << coord_header(mode) << ",mean_direction,concentration\n";
  for (const auto& p : pred)
    out << p.location.x << ',' << p.location.y << ',' << p.mean_direction.value() << ',' << p.concentration << '\n';
}

std::vector<CircularPrediction> read_predictions(const std::filesystem::path& path) {
  CsvReader csv(path);
  std::vector<std::string> f;
  if (!csv.next(f)) throw ParseError(csv.src, 1, "empty predictions file");
  const Mode mode = mode_from_header(f, csv.src);
  if (f.size() != 4 || f[2] != "mean_direction" || f[3] != "concentration")
    throw ParseError(csv.src, csv.line_no,
                     std::string("expected header ") + coord_header(mode) + ",mean_direction,concentration");
  std::vector<CircularPrediction> out;
  while (csv.next(f)) {
    if (f.size() != 4) throw ParseError(csv.src, csv.line_no, "expected 4 fields");
    CircularPrediction p;
    p.location = make_location(mode, parse_double(f[0], csv.src, csv.line_no),
                               parse_double(f[1], csv.src, csv.line_no), csv.src, csv.line_no);
    p.mean_direction = Angle(parse_double(f[2], csv.src, csv.line_no));
    p.concentration = parse_double(f[3], csv.src, csv.line_no);
    if (p.concentration < 0.0 || p.concentration > 1.0)
      throw ParseError(csv.src, csv.line_no, "concentration outside [0, 1]");
    out.push_back(p);
  }
  if (out.empty()) throw ParseError(csv.src, csv.line_no, "no predictions");
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void Manifest::add_input(const std::filesystem::path& path) { inputs[path.string()] = hex64(hash_file(path)); }

void Manifest::add_output(const std::filesystem::path& path) {
  outputs[path.filename().string()] = hex64(hash_file(path));
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json j;
  j["tool"] = "wgmrf";
  j["version"] = version();
  j["command"] = command;
  j["seed"] = has_seed ? nlohmann::json(seed) : nlohmann::json(nullptr);
  j["config"] = config;
  j["config_hash"] = hex64(fnv1a(config.dump()));
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j;
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ResourceLimit("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

std::string version() { return WGMRF_VERSION; }

}  // namespace wgmrf::cli
