#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xtal/io/text.hpp"
#include "xtal/structure.hpp"

namespace xtal::io {

namespace cif {

struct Token {
  std::string text;
  std::size_t line = 0;
  bool quoted = false;  // quoted strings and text fields are never tags or keywords
};

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t line_no = 0, pos = 0;
  bool in_field = false;
  std::string field;
  std::size_t field_line = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    pos = eol + 1;
    if (!line.empty() && line.front() == ';') {
      if (in_field) {
        out.push_back({field, field_line, true});
        in_field = false;
      } else {
        in_field = true;
        field = std::string(line.substr(1));
        field_line = line_no;
      }
      continue;
    }
    if (in_field) {
      field += '\n';
      field += line;
      continue;
    }
    std::size_t i = 0;
    while (i < line.size()) {
      const char c = line[i];
      if (c == ' ' || c == '\t') {
        ++i;
      } else if (c == '#') {
        break;
      } else if (c == '\'' || c == '"') {
        std::size_t j = i + 1;
        while (j < line.size() && !(line[j] == c && (j + 1 == line.size() || line[j + 1] == ' ' || line[j + 1] == '\t')))
          ++j;
        if (j >= line.size()) throw ParseError("unterminated quoted string", line_no);
        out.push_back({std::string(line.substr(i + 1, j - i - 1)), line_no, true});
        i = j + 1;
      } else {
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        out.push_back({std::string(line.substr(i, j - i)), line_no, false});
        i = j;
      }
    }
    if (eol == text.size()) break;
  }
  if (in_field) throw ParseError("unterminated text field", field_line);
  return out;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool is_tag(const Token& t) { return !t.quoted && !t.text.empty() && t.text.front() == '_'; }
inline bool is_keyword(const Token& t) {
  if (t.quoted) return false;
  const auto l = lower(t.text);
  return l == "loop_" || l.rfind("data_", 0) == 0 || l.rfind("save_", 0) == 0 || l == "global_" || l == "stop_";
}

struct Loop {
  std::vector<std::string> tags;  // lower case
  std::vector<Token> values;
  std::size_t line = 0;

  int column(std::string_view tag) const {
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (tags[i] == tag) return static_cast<int>(i);
    return -1;
  }
};

struct Block {
  std::string name;
  std::size_t line = 0;
  std::map<std::string, Token> items;  // lower-case tag -> value
  std::vector<Loop> loops;
};

inline std::vector<Block> parse_blocks(const std::vector<Token>& toks) {
  std::vector<Block> blocks;
  std::size_t i = 0;
  while (i < toks.size()) {
    const Token& t = toks[i];
    const auto l = lower(t.text);
    if (!t.quoted && l.rfind("data_", 0) == 0) {
      blocks.push_back({t.text.substr(5), t.line, {}, {}});
      ++i;
      continue;
    }
    if (blocks.empty()) throw ParseError("content before the first data_ block", t.line);
    Block& b = blocks.back();
    if (!t.quoted && l == "loop_") {
      Loop loop;
      loop.line = t.line;
      ++i;
      while (i < toks.size() && is_tag(toks[i])) loop.tags.push_back(lower(toks[i++].text));
      if (loop.tags.empty()) throw ParseError("loop_ without tags", t.line);
      while (i < toks.size() && !is_tag(toks[i]) && !is_keyword(toks[i])) loop.values.push_back(toks[i++]);
      b.loops.push_back(std::move(loop));
      continue;
    }
    if (is_tag(t)) {
      if (i + 1 >= toks.size() || is_tag(toks[i + 1]) || is_keyword(toks[i + 1]))
        throw ParseError("tag " + t.text + " has no value", t.line);
      b.items[l] = toks[i + 1];
      i += 2;
      continue;
    }
    throw ParseError("unexpected token '" + t.text + "'", t.line);
  }
  return blocks;
}

// "5.431(2)" -> 5.431
inline std::optional<double> number(std::string_view s) {
  const auto p = s.find('(');
  if (p != std::string_view::npos) s = s.substr(0, p);
  return to_double(s);
}

inline std::string element_of(std::string_view label) {
  std::size_t i = 0;
  while (i < label.size() && !std::isalpha(static_cast<unsigned char>(label[i]))) ++i;
  if (i == label.size()) return {};
  std::string el(1, static_cast<char>(std::toupper(static_cast<unsigned char>(label[i]))));
  if (i + 1 < label.size() && std::islower(static_cast<unsigned char>(label[i + 1]))) el += label[i + 1];
  return el;
}

inline std::string squash(std::string s) {
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  return lower(s);
}

inline void check_p1(const Block& b) {
  for (const char* tag : {"_symmetry_space_group_name_h-m", "_space_group_name_h-m_alt"}) {
    const auto it = b.items.find(tag);
    if (it != b.items.end() && it->second.text != "?" && squash(it->second.text) != "p1")
      throw ParseError("unsupported symmetry: space group '" + it->second.text + "' (only P1 is accepted)",
                       it->second.line);
  }
  for (const char* tag : {"_symmetry_int_tables_number", "_space_group_it_number"}) {
    const auto it = b.items.find(tag);
    if (it != b.items.end() && it->second.text != "?" && it->second.text != "1")
      throw ParseError("unsupported symmetry: space group number " + it->second.text + " (only 1 is accepted)",
                       it->second.line);
  }
  for (const auto& loop : b.loops)
    for (const char* tag : {"_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"}) {
      const int col = loop.column(tag);
      if (col < 0) continue;
      const std::size_t w = loop.tags.size();
      for (std::size_t r = 0; r * w + static_cast<std::size_t>(col) < loop.values.size(); ++r) {
        const Token& op = loop.values[r * w + static_cast<std::size_t>(col)];
        if (squash(op.text) != "x,y,z")
          throw ParseError("unsupported symmetry operation '" + op.text + "' (only x, y, z is accepted)", op.line);
      }
    }
}

inline Structure build(const Block& b) {
  check_p1(b);
  double cell[6];
  const char* names[6] = {"_cell_length_a", "_cell_length_b", "_cell_length_c",
                          "_cell_angle_alpha", "_cell_angle_beta", "_cell_angle_gamma"};
  for (int k = 0; k < 6; ++k) {
    const auto it = b.items.find(names[k]);
    if (it == b.items.end()) throw ParseError(std::string("missing cell tag ") + names[k], b.line);
    const auto v = number(it->second.text);
    if (!v) throw ParseError(std::string("bad value for ") + names[k] + ": '" + it->second.text + "'", it->second.line);
    cell[k] = *v;
  }
  Lattice lattice = [&] {
    try {
      return Lattice::from_parameters(cell[0], cell[1], cell[2], cell[3], cell[4], cell[5]);
    } catch (const ContractError& e) {
      throw ParseError(std::string("invalid cell: ") + e.what(), b.line);
    }
  }();

  const Loop* sites = nullptr;
  for (const auto& loop : b.loops)
    if (loop.column("_atom_site_fract_x") >= 0) sites = &loop;
  if (!sites) throw ParseError("no atom_site loop with fractional coordinates", b.line);
  const int cx = sites->column("_atom_site_fract_x"), cy = sites->column("_atom_site_fract_y"),
            cz = sites->column("_atom_site_fract_z");
  if (cy < 0 || cz < 0) throw ParseError("atom_site loop lacks _atom_site_fract_y or _atom_site_fract_z", sites->line);
  int cs = sites->column("_atom_site_type_symbol");
  if (cs < 0) cs = sites->column("_atom_site_label");
  if (cs < 0) throw ParseError("atom_site loop lacks _atom_site_type_symbol and _atom_site_label", sites->line);
  const int cocc = sites->column("_atom_site_occupancy");

  const std::size_t w = sites->tags.size();
  if (sites->values.size() % w != 0) {
    const std::size_t last = sites->values.size() - sites->values.size() % w;
    throw ParseError("malformed atom_site loop row: expected " + std::to_string(w) + " values, found " +
                         std::to_string(sites->values.size() - last),
                     sites->values[last].line);
  }
  if (sites->values.empty()) throw ParseError("atom_site loop has no rows", sites->line);
  std::vector<std::string> species;
  std::vector<Vec3> frac;
  for (std::size_t r = 0; r < sites->values.size() / w; ++r) {
    const Token* row = &sites->values[r * w];
    Vec3 f;
    const int cols[3] = {cx, cy, cz};
    for (int k = 0; k < 3; ++k) {
      const Token& tok = row[cols[k]];
      const auto v = number(tok.text);
      if (!v) throw ParseError("malformed atom_site loop row: bad fractional coordinate '" + tok.text + "'", tok.line);
      f[k] = *v;
    }
    if (cocc >= 0) {
      const auto occ = number(row[cocc].text);
      if (!occ || std::abs(*occ - 1.0) > 1e-6)
        throw ParseError("malformed atom_site loop row: partial occupancy '" + row[cocc].text + "' is not supported",
                         row[cocc].line);
    }
    const std::string el = element_of(row[cs].text);
    if (el.empty()) throw ParseError("malformed atom_site loop row: no element in '" + row[cs].text + "'", row[cs].line);
    species.push_back(el);
    frac.push_back(f);
  }
  return Structure(std::move(lattice), std::move(species), std::move(frac), b.name);
}

}  // namespace cif

/// All data blocks of a P1 CIF document.
inline std::vector<Structure> parse_cif_blocks(std::string_view text) {
  const auto blocks = cif::parse_blocks(cif::tokenize(text));
  if (blocks.empty()) throw ParseError("no data_ block");
  std::vector<Structure> out;
  for (const auto& b : blocks) out.push_back(cif::build(b));
  return out;
}

/// First data block of a P1 CIF. Cell parameters give the conventional
/// orientation (a along x, b in the xy plane); coordinates are wrapped.
inline Structure parse_cif_p1(std::string_view text) { return parse_cif_blocks(text).front(); }

inline std::string write_cif_p1(const Structure& s) {
  const auto p = s.lattice().parameters();
  std::string out = "data_" + (s.id().empty() ? std::string("structure") : s.id()) + "\n";
  out += "_symmetry_space_group_name_H-M   'P 1'\n";
  out += "_cell_length_a   " + format_g17(p.a) + "\n";
  out += "_cell_length_b   " + format_g17(p.b) + "\n";
  out += "_cell_length_c   " + format_g17(p.c) + "\n";
  out += "_cell_angle_alpha   " + format_g17(p.alpha) + "\n";
  out += "_cell_angle_beta   " + format_g17(p.beta) + "\n";
  out += "_cell_angle_gamma   " + format_g17(p.gamma) + "\n";
  out += "loop_\n _symmetry_equiv_pos_as_xyz\n 'x, y, z'\n";
  out += "loop_\n _atom_site_label\n _atom_site_type_symbol\n _atom_site_fract_x\n _atom_site_fract_y\n"
         " _atom_site_fract_z\n _atom_site_occupancy\n";
  std::map<std::string, int> count;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& el = s.species()[i];
    const auto& f = s.frac_coords()[i];
    out += "  " + el + std::to_string(count[el]++) + " " + el + " " + format_g17(f[0]) + " " + format_g17(f[1]) + " " +
           format_g17(f[2]) + " 1\n";
  }
  return out;
}

}  // namespace xtal::io
