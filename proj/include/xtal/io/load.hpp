#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xtal/io/cif.hpp"
#include "xtal/io/extxyz.hpp"
#include "xtal/io/jsonl.hpp"

namespace xtal::io {

/// Reads structures from a .cif, .xyz/.extxyz or .jsonl file. Frames without
/// an id are named after the file stem and their index.
inline std::vector<Structure> load_structures(const std::string& path) {
  const std::filesystem::path p(path);
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::vector<Structure> out;
  if (ext == ".jsonl" || ext == ".json") return read_dataset_jsonl(path);
  if (ext == ".cif")
    out = parse_cif_blocks(read_file(path));
  else if (ext == ".xyz" || ext == ".extxyz")
    out = parse_extxyz(read_file(path));
  else
    throw ParseError("unsupported file type '" + ext + "' for " + path + " (expected .cif, .xyz, .extxyz or .jsonl)");
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].id().empty())
      out[i] = out[i].with_id(out.size() == 1 ? p.stem().string() : p.stem().string() + "-" + std::to_string(i));
  return out;
}

}  // namespace xtal::io
