#pragma once

#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xtal/io/text.hpp"
#include "xtal/structure.hpp"

namespace xtal::io {

using json = nlohmann::json;

/// One dataset record: {id, lattice[9] row-major, species[N], frac_coords[3N],
/// energy (number or null, optional), tags (string map, optional)}.
inline json record_to_json(const Structure& s) {
  json j;
  j["id"] = s.id();
  json lat = json::array();
  for (int k = 0; k < 9; ++k) lat.push_back(s.lattice().basis()(k / 3, k % 3));
  j["lattice"] = std::move(lat);
  j["species"] = s.species();
  json frac = json::array();
  for (const auto& f : s.frac_coords()) frac.push_back(f[0]), frac.push_back(f[1]), frac.push_back(f[2]);
  j["frac_coords"] = std::move(frac);
  j["energy"] = s.energy() ? json(*s.energy()) : json(nullptr);
  j["tags"] = s.tags();
  return j;
}

inline Structure record_from_json(const json& j, std::size_t line = 0) {
  auto fail = [&](const std::string& what) -> void { throw ParseError("invalid record: " + what, line); };
  if (!j.is_object()) fail("expected a JSON object");
  for (const char* key : {"id", "lattice", "species", "frac_coords"})
    if (!j.contains(key)) fail(std::string("missing '") + key + "'");
  if (!j["id"].is_string()) fail("'id' must be a string");
  const auto& lat = j["lattice"];
  if (!lat.is_array() || lat.size() != 9) fail("'lattice' must hold 9 numbers");
  Mat3 m;
  for (int k = 0; k < 9; ++k) {
    if (!lat[static_cast<std::size_t>(k)].is_number()) fail("'lattice' must hold 9 numbers");
    m(k / 3, k % 3) = lat[static_cast<std::size_t>(k)].get<double>();
  }
  const auto& sp = j["species"];
  if (!sp.is_array() || sp.empty()) fail("'species' must be a non-empty array");
  std::vector<std::string> species;
  for (const auto& e : sp) {
    if (!e.is_string()) fail("'species' entries must be strings");
    species.push_back(e.get<std::string>());
  }
  const auto& fc = j["frac_coords"];
  if (!fc.is_array() || fc.size() != 3 * species.size())
    fail("'frac_coords' must hold 3 numbers per species entry (" + std::to_string(3 * species.size()) + ")");
  std::vector<Vec3> frac(species.size());
  for (std::size_t k = 0; k < fc.size(); ++k) {
    if (!fc[k].is_number()) fail("'frac_coords' must hold numbers");
    frac[k / 3][static_cast<int>(k % 3)] = fc[k].get<double>();
  }
  std::optional<double> energy;
  if (j.contains("energy") && !j["energy"].is_null()) {
    if (!j["energy"].is_number()) fail("'energy' must be a number or null");
    energy = j["energy"].get<double>();
  }
  std::map<std::string, std::string> tags;
  if (j.contains("tags")) {
    if (!j["tags"].is_object()) fail("'tags' must be an object");
    for (const auto& [k, v] : j["tags"].items()) {
      if (!v.is_string()) fail("tag '" + k + "' must be a string");
      tags[k] = v.get<std::string>();
    }
  }
  try {
    return Structure(Lattice(m), std::move(species), std::move(frac), j["id"].get<std::string>(), energy,
                     std::move(tags));
  } catch (const ContractError& e) {
    throw ParseError(std::string("invalid record: ") + e.what(), line);
  }
}

/// Streams records one line at a time. Blank lines are skipped; ids must be
/// unique across the stream.
class JsonlReader {
 public:
  explicit JsonlReader(std::istream& in) : in_(in) {}

  std::optional<Structure> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line_no_);
      }
      Structure s = record_from_json(j, line_no_);
      const auto [it, fresh] = first_seen_.emplace(s.id(), line_no_);
      if (!fresh)
        throw ParseError("duplicate id '" + s.id() + "' (first seen on line " + std::to_string(it->second) + ")",
                         line_no_);
      return s;
    }
    return std::nullopt;
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
  std::unordered_map<std::string, std::size_t> first_seen_;
};

inline std::vector<Structure> read_dataset_jsonl(std::istream& in) {
  JsonlReader reader(in);
  std::vector<Structure> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

inline std::vector<Structure> read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_dataset_jsonl(in);
}

inline std::string dataset_jsonl(const std::vector<Structure>& records) {
  std::string out;
  for (const auto& s : records) out += record_to_json(s).dump() + "\n";
  return out;
}

inline void write_dataset_jsonl(const std::vector<Structure>& records, const std::string& path) {
  write_file(path, dataset_jsonl(records));
}

}  // namespace xtal::io
