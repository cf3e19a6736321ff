// SPDX-License-Identifier: Apache-2.0
//
// Dataset directory layout:
//   <root>/manifest.json
//   <root>/images/<id>.png
//   <root>/labels/<id>.png   (palette-color-encoded mask)

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "advseg/image.hpp"
#include "advseg/png_io.hpp"

namespace advseg {

inline constexpr int kManifestSchemaVersion = 1;

struct LabeledSample {
  std::string id;
  Image image;
  Mask mask;
  WeatherCondition weather = WeatherCondition::Normal;
  TimeOfDay time = TimeOfDay::Day;
  DomainTag domain = DomainTag::StandardReal;

  void validate() const {
    if (image.h != mask.h || image.w != mask.w)
      throw ShapeError("sample " + id + ": image and mask dimensions differ");
    for (std::uint8_t v : mask.v)
      if (v != kIgnoreIndex && v >= kNumClasses)
        throw InvalidIndexError("sample " + id + ": mask value " + std::to_string(v));
  }

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct ManifestRecord {
  std::string id;
  std::string image_path;  // relative to the dataset root
  std::string mask_path;
  WeatherCondition weather = WeatherCondition::Normal;
  TimeOfDay time = TimeOfDay::Day;
  DomainTag domain = DomainTag::StandardReal;
};

struct DatasetManifest {
  int schema_version = kManifestSchemaVersion;
  std::vector<ManifestRecord> records;
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& r : m.records) {
    samples.push_back({{"id", r.id},
                       {"image", r.image_path},
                       {"mask", r.mask_path},
                       {"weather", std::string(to_string(r.weather))},
                       {"time", std::string(to_string(r.time))},
                       {"domain", std::string(to_string(r.domain))}});
  }
  return {{"schema_version", m.schema_version}, {"samples", samples}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kManifestSchemaVersion)
    throw ConfigError("unsupported manifest schema_version " + std::to_string(m.schema_version));
  for (const auto& s : j.at("samples")) {
    ManifestRecord r;
    r.id = s.at("id").get<std::string>();
    r.image_path = s.at("image").get<std::string>();
    r.mask_path = s.at("mask").get<std::string>();
    r.weather = weather_from_string(s.at("weather").get<std::string>());
    r.time = time_from_string(s.at("time").get<std::string>());
    r.domain = domain_from_string(s.at("domain").get<std::string>());
    m.records.push_back(std::move(r));
  }
  return m;
}

/// Writes PNGs plus manifest.json under root; images quantized to 8-bit.
inline DatasetManifest save_dataset(const std::vector<LabeledSample>& samples,
                                    const std::string& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(root) / "images", ec);
  fs::create_directories(fs::path(root) / "labels", ec);
  if (ec) throw IoError("cannot create dataset directories under " + root + ": " + ec.message());

  std::set<std::string> seen;
  DatasetManifest manifest;
  for (const auto& s : samples) {
    s.validate();
    if (!seen.insert(s.id).second) throw DuplicateIdError("duplicate sample id \"" + s.id + "\"");
    ManifestRecord r;
    r.id = s.id;
    r.image_path = "images/" + s.id + ".png";
    r.mask_path = "labels/" + s.id + ".png";
    r.weather = s.weather;
    r.time = s.time;
    r.domain = s.domain;
    write_png((fs::path(root) / r.image_path).string(), to_u8(s.image));
    write_png((fs::path(root) / r.mask_path).string(), encode_mask(s.mask));
    manifest.records.push_back(std::move(r));
  }

  const fs::path manifest_path = fs::path(root) / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << manifest_to_json(manifest).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + manifest_path.string());
  return manifest;
}

/// Loads every sample eagerly, ordered by id.
inline std::vector<LabeledSample> load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(root) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw MissingManifestError("missing manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("bad manifest " + manifest_path.string() + ": " + e.what());
  }
  const DatasetManifest manifest = manifest_from_json(j);

  std::set<std::string> seen;
  std::vector<LabeledSample> samples;
  samples.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    if (!seen.insert(r.id).second) throw DuplicateIdError("duplicate sample id \"" + r.id + "\"");
    const fs::path img = fs::path(root) / r.image_path;
    const fs::path msk = fs::path(root) / r.mask_path;
    if (!fs::exists(img)) throw MissingFileError("missing file for sample \"" + r.id + "\": " + img.string());
    if (!fs::exists(msk)) throw MissingFileError("missing file for sample \"" + r.id + "\": " + msk.string());
    LabeledSample s;
    s.id = r.id;
    s.image = to_float(read_png(img.string()));
    s.mask = decode_mask(read_png(msk.string()));
    s.weather = r.weather;
    s.time = r.time;
    s.domain = r.domain;
    s.validate();
    samples.push_back(std::move(s));
  }
  std::sort(samples.begin(), samples.end(),
            [](const LabeledSample& a, const LabeledSample& b) { return a.id < b.id; });
  return samples;
}

}  // namespace advseg
