#include "glip/sample_io.hpp"

#include "glip/util.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace glip {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::uint32_t to_little(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::little) return x;
  return ((x & 0xFFu) << 24) | ((x & 0xFF00u) << 8) | ((x >> 8) & 0xFF00u) | (x >> 24);
}

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v[0], v[1], v[2]}); }

Vec3 vec_from(const ordered_json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error(concat("sidecar key '", key, "' must be a 3-array"));
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

const ordered_json& require(const ordered_json& doc, const std::string& key, const fs::path& where) {
  auto it = doc.find(key);
  if (it == doc.end()) throw std::runtime_error(concat(where.string(), ": missing required key '", key, "'"));
  return *it;
}

fs::path strip(const fs::path& stem) {
  if (stem.extension() == ".json" || stem.extension() == ".raw") return fs::path(stem).replace_extension();
  return stem;
}

}  // namespace

void save_sample(const fs::path& dir, const Sample& sample) {
  sample.volume.validate();
  sample.landmarks.validate();
  if (sample.meta.sample_id.empty()) throw std::invalid_argument("save_sample: sample_id is empty");

  fs::create_directories(dir);
  const fs::path base = dir / sample.meta.sample_id;

  {
    std::vector<std::uint32_t> words(sample.volume.data.size());
    for (std::size_t i = 0; i < words.size(); ++i) words[i] = to_little(std::bit_cast<std::uint32_t>(sample.volume.data[i]));
    std::ofstream raw(fs::path(base).concat(".raw"), std::ios::binary | std::ios::trunc);
    if (!raw) throw std::runtime_error(concat("cannot open ", base.string(), ".raw for writing"));
    raw.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!raw) throw std::runtime_error(concat("write failed for ", base.string(), ".raw"));
  }

  ordered_json doc;
  const auto& g = sample.volume.grid;
  doc["format_version"] = kSampleFormatVersion;
  doc["shape"] = ordered_json::array({g.shape[0], g.shape[1], g.shape[2]});
  doc["spacing_mm"] = vec_json(g.spacing);
  doc["origin_mm"] = vec_json(g.origin);
  ordered_json lms = ordered_json::object();
  for (const auto& p : sample.landmarks.points) lms[p.name] = vec_json(p.position);
  doc["landmarks"] = lms;
  doc["quality"] = to_string(sample.meta.quality);
  doc["rng_seed"] = sample.meta.rng_seed;

  std::ofstream js(fs::path(base).concat(".json"), std::ios::trunc);
  if (!js) throw std::runtime_error(concat("cannot open ", base.string(), ".json for writing"));
  js << doc.dump(2) << '\n';
  if (!js) throw std::runtime_error(concat("write failed for ", base.string(), ".json"));
}

Sample load_sample(const fs::path& stem_in) {
  const fs::path stem = strip(stem_in);
  const fs::path json_path = fs::path(stem).concat(".json");
  const fs::path raw_path = fs::path(stem).concat(".raw");

  std::ifstream js(json_path);
  if (!js) throw std::runtime_error(concat("cannot open sidecar ", json_path.string()));
  ordered_json doc;
  try {
    doc = ordered_json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(concat(json_path.string(), ": malformed JSON: ", e.what()));
  }

  Sample s;
  try {
    const int version = require(doc, "format_version", json_path).get<int>();
    if (version != kSampleFormatVersion)
      throw std::runtime_error(concat(json_path.string(), ": unknown format_version ", version));

    const auto& shape = require(doc, "shape", json_path);
    if (!shape.is_array() || shape.size() != 3) throw std::runtime_error("sidecar key 'shape' must be a 3-array");
    Grid g;
    for (int a = 0; a < 3; ++a) g.shape[a] = shape[a].get<int>();
    g.spacing = vec_from(require(doc, "spacing_mm", json_path), "spacing_mm");
    g.origin = vec_from(require(doc, "origin_mm", json_path), "origin_mm");
    g.validate();

    const auto& lms = require(doc, "landmarks", json_path);
    if (!lms.is_object()) throw std::runtime_error("sidecar key 'landmarks' must be an object");
    for (const auto& [name, pos] : lms.items()) s.landmarks.points.push_back({name, vec_from(pos, "landmarks." + name)});
    s.landmarks.validate();

    s.meta.quality = parse_quality(require(doc, "quality", json_path).get<std::string>());
    s.meta.rng_seed = require(doc, "rng_seed", json_path).get<std::uint64_t>();
    s.meta.sample_id = stem.filename().string();
    s.volume.grid = g;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(concat(json_path.string(), ": bad value type: ", e.what()));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(concat(json_path.string(), ": ", e.what()));
  }

  const std::size_t expected = s.volume.grid.voxel_count() * 4;
  std::ifstream raw(raw_path, std::ios::binary | std::ios::ate);
  if (!raw) throw std::runtime_error(concat("cannot open voxel file ", raw_path.string()));
  const auto actual = static_cast<std::size_t>(raw.tellg());
  if (actual != expected)
    throw std::runtime_error(concat(raw_path.string(), ": byte count mismatch, expected ", expected, " bytes, got ", actual));
  raw.seekg(0);
  std::vector<std::uint32_t> words(s.volume.grid.voxel_count());
  raw.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
  if (!raw) throw std::runtime_error(concat("read failed for ", raw_path.string()));
  s.volume.data.resize(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) s.volume.data[i] = std::bit_cast<float>(to_little(words[i]));
  return s;
}

void write_manifest(const fs::path& dir, const std::vector<ManifestEntry>& entries) {
  ordered_json doc = ordered_json::array();
  for (const auto& e : entries)
    doc.push_back({{"sample_id", e.sample_id}, {"quality", to_string(e.quality)}, {"rng_seed", e.rng_seed}});
  fs::create_directories(dir);
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error(concat("cannot write ", (dir / "manifest.json").string()));
  os << doc.dump(2) << '\n';
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw std::runtime_error(concat("cannot open manifest ", path.string()));
  std::vector<ManifestEntry> out;
  try {
    const auto doc = ordered_json::parse(is);
    for (const auto& e : doc)
      out.push_back({e.at("sample_id").get<std::string>(), parse_quality(e.at("quality").get<std::string>()),
                     e.at("rng_seed").get<std::uint64_t>()});
  } catch (const std::exception& e) {
    throw std::runtime_error(concat(path.string(), ": ", e.what()));
  }
  return out;
}

std::vector<Sample> load_dataset(const fs::path& dir) {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(dir)) {
    Sample s = load_sample(dir / e.sample_id);
    s.meta.quality = e.quality;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace glip
