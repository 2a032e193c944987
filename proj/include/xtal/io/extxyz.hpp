#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xtal/io/text.hpp"
#include "xtal/structure.hpp"

namespace xtal::io {

namespace extxyz {

// key=value pairs of a comment line; values may be "double quoted".
inline std::vector<std::pair<std::string, std::string>> parse_info(std::string_view line, std::size_t line_no) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
  };
  auto word = [&] {
    std::string w;
    if (i < line.size() && line[i] == '"') {
      ++i;
      while (i < line.size() && line[i] != '"') {
        if (line[i] == '\\' && i + 1 < line.size()) ++i;
        w += line[i++];
      }
      if (i >= line.size()) throw ParseError("unterminated quote in comment line", line_no);
      ++i;
    } else {
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '=' && line[i] != '\r') w += line[i++];
    }
    return w;
  };
  for (skip_ws(); i < line.size(); skip_ws()) {
    std::string key = word();
    skip_ws();
    std::string value = "T";  // bare keys are boolean flags
    if (i < line.size() && line[i] == '=') {
      ++i;
      skip_ws();
      value = word();
    }
    if (key.empty()) throw ParseError("malformed key=value pair in comment line", line_no);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline std::string quote(const std::string& v) {
  if (!v.empty() && v.find_first_of(" \t=\"") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

}  // namespace extxyz

/// Frames of an extended-XYZ document. Each comment line must carry
/// Lattice="ax ay az bx by bz cx cy cz" (row-major, Angstrom). Positions are
/// Cartesian and are wrapped into the cell. `id` and `energy` keys fill the
/// matching fields; other keys become tags.
inline std::vector<Structure> parse_extxyz(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    lines.push_back(text.substr(pos, eol - pos));
    pos = eol + 1;
  }
  std::vector<Structure> out;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    const std::size_t header = i + 1;
    const auto n = to_integer(trim(lines[i]));
    if (!n || *n < 1) throw ParseError("expected a positive atom count, found '" + std::string(trim(lines[i])) + "'", header);
    if (i + 1 >= lines.size()) throw ParseError("missing comment line", header + 1);
    const auto info = extxyz::parse_info(lines[i + 1], header + 1);

    std::optional<Lattice> lattice;
    std::string id;
    std::optional<double> energy;
    std::map<std::string, std::string> tags;
    int species_col = 0, pos_col = 1;
    for (const auto& [key, value] : info) {
      if (key == "Lattice") {
        const auto parts = split_ws(value);
        if (parts.size() != 9) throw ParseError("Lattice must hold 9 numbers", header + 1);
        Mat3 m;
        for (int k = 0; k < 9; ++k) {
          const auto v = to_double(parts[static_cast<std::size_t>(k)]);
          if (!v) throw ParseError("bad Lattice entry '" + parts[static_cast<std::size_t>(k)] + "'", header + 1);
          m(k / 3, k % 3) = *v;
        }
        try {
          lattice = Lattice(m);
        } catch (const ContractError& e) {
          throw ParseError(std::string("invalid Lattice: ") + e.what(), header + 1);
        }
      } else if (key == "Properties") {
        // name:type:count triples; locate species and pos
        std::vector<std::string> f;
        std::size_t b = 0;
        for (std::size_t k = 0; k <= value.size(); ++k)
          if (k == value.size() || value[k] == ':') f.push_back(value.substr(b, k - b)), b = k + 1;
        if (f.size() % 3 != 0) throw ParseError("malformed Properties", header + 1);
        species_col = pos_col = -1;
        int col = 0;
        for (std::size_t k = 0; k < f.size(); k += 3) {
          const auto cnt = to_integer(f[k + 2]);
          if (!cnt || *cnt < 1) throw ParseError("malformed Properties", header + 1);
          if (f[k] == "species") species_col = col;
          if (f[k] == "pos") pos_col = col;
          col += static_cast<int>(*cnt);
        }
        if (species_col < 0 || pos_col < 0) throw ParseError("Properties lacks species or pos", header + 1);
      } else if (key == "id") {
        id = value;
      } else if (key == "energy") {
        energy = to_double(value);
        if (!energy) throw ParseError("bad energy '" + value + "'", header + 1);
      } else if (key != "pbc") {
        tags[key] = value;
      }
    }
    if (!lattice) throw ParseError("missing Lattice key", header + 1);

    const auto count = static_cast<std::size_t>(*n);
    std::vector<std::string> species;
    std::vector<Vec3> cart;
    for (std::size_t a = 0; a < count; ++a) {
      const std::size_t ln = i + 2 + a;
      if (ln >= lines.size() || trim(lines[ln]).empty())
        throw ParseError("atom count mismatch: header says " + std::to_string(count) + ", found " + std::to_string(a),
                         ln + 1);
      const auto parts = split_ws(lines[ln]);
      const auto need = static_cast<std::size_t>(std::max(species_col, pos_col + 2)) + 1;
      if (parts.size() < need) throw ParseError("too few columns in atom line", ln + 1);
      species.push_back(parts[static_cast<std::size_t>(species_col)]);
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        const auto v = to_double(parts[static_cast<std::size_t>(pos_col + k)]);
        if (!v) throw ParseError("bad coordinate '" + parts[static_cast<std::size_t>(pos_col + k)] + "'", ln + 1);
        p[k] = *v;
      }
      cart.push_back(p);
    }
    i += 2 + count;
    // a following line that is not blank and not a count means the header undercounted
    if (i < lines.size() && !trim(lines[i]).empty() && !to_integer(trim(lines[i])))
      throw ParseError("atom count mismatch: more atom lines than the header's " + std::to_string(count), i + 1);
    out.push_back(Structure::from_cartesian(*lattice, std::move(species), cart, std::move(id)).with_energy(energy)
                      .with_tags(std::move(tags)));
  }
  return out;
}

/// Inverse of parse_extxyz, at 17 significant digits.
inline std::string write_extxyz(const std::vector<Structure>& structures) {
  std::string out;
  for (const auto& s : structures) {
    out += std::to_string(s.size()) + "\n";
    std::string lat;
    const Mat3& b = s.lattice().basis();
    for (int k = 0; k < 9; ++k) lat += (k ? " " : "") + format_g17(b(k / 3, k % 3));
    out += "Lattice=\"" + lat + "\" Properties=species:S:1:pos:R:3 pbc=\"T T T\"";
    if (!s.id().empty()) out += " id=" + extxyz::quote(s.id());
    if (s.energy()) out += " energy=" + format_g17(*s.energy());
    for (const auto& [k, v] : s.tags()) out += " " + extxyz::quote(k) + "=" + extxyz::quote(v);
    out += "\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vec3 c = s.cartesian(i);
      out += s.species()[i] + " " + format_g17(c[0]) + " " + format_g17(c[1]) + " " + format_g17(c[2]) + "\n";
    }
  }
  return out;
}

}  // namespace xtal::io
