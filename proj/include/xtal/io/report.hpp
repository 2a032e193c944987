#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xtal/dedup.hpp"
#include "xtal/io/text.hpp"
#include "xtal/metrics.hpp"
#include "xtal/splits.hpp"

namespace xtal::io {

using json = nlohmann::json;

inline json tolerances_json(const MatchTolerances& t) {
  return {{"ltol", t.ltol}, {"stol", t.stol}, {"angle_tol", t.angle_tol}};
}

/// {metric, tolerances, n_test, n_ref_match, metre_rate, mean_rmse, mean_crmse,
/// per_ref: [{ref_id, gen_id|null, rmse|null}]}. Numbers at full precision.
/// per_ref allows re-deriving cRMSE at any stol up to tolerances.stol; larger
/// values need a new matching run.
inline json report_to_json(const MetreReport& r) {
  json per_ref = json::array();
  for (const auto& b : r.per_ref)
    per_ref.push_back({{"ref_id", b.ref_id},
                       {"gen_id", b.gen_id ? json(*b.gen_id) : json(nullptr)},
                       {"rmse", b.rmse ? json(*b.rmse) : json(nullptr)}});
  return {{"metric", r.metric},
          {"tolerances", tolerances_json(r.tolerances)},
          {"n_test", r.n_test},
          {"n_ref_match", r.n_ref_match},
          {"metre_rate", r.metre_rate},
          {"mean_rmse", r.mean_rmse ? json(*r.mean_rmse) : json(nullptr)},
          {"mean_crmse", r.mean_crmse},
          {"per_ref", std::move(per_ref)}};
}

inline MetreReport report_from_json(const json& j) {
  try {
    MetreReport r;
    r.metric = j.at("metric").get<std::string>();
    const auto& t = j.at("tolerances");
    r.tolerances = {t.at("ltol").get<double>(), t.at("stol").get<double>(), t.at("angle_tol").get<double>()};
    for (const auto& e : j.at("per_ref")) {
      RefBest b;
      b.ref_id = e.at("ref_id").get<std::string>();
      if (!e.at("gen_id").is_null()) b.gen_id = e.at("gen_id").get<std::string>();
      if (!e.at("rmse").is_null()) b.rmse = e.at("rmse").get<double>();
      r.per_ref.push_back(std::move(b));
    }
    r.n_test = j.at("n_test").get<std::size_t>();
    r.n_ref_match = j.at("n_ref_match").get<std::size_t>();
    r.metre_rate = j.at("metre_rate").get<double>();
    if (!j.at("mean_rmse").is_null()) r.mean_rmse = j.at("mean_rmse").get<double>();
    r.mean_crmse = j.at("mean_crmse").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid report: ") + e.what());
  }
}

/// Per-reference table: ref_id,gen_id,rmse (6 significant digits).
inline std::string report_to_csv(const MetreReport& r) {
  std::string out = csv_row({"ref_id", "gen_id", "rmse"});
  for (const auto& b : r.per_ref)
    out += csv_row({b.ref_id, b.gen_id.value_or(""), b.rmse ? format_sig6(*b.rmse) : ""});
  return out;
}

enum class ReportFormat { json, csv };

inline void write_report(const MetreReport& r, ReportFormat format, const std::string& path) {
  write_file(path, format == ReportFormat::json ? report_to_json(r).dump(2) + "\n" : report_to_csv(r));
}

/// "METRe% / RMSE / cRMSE", e.g. "98.2% / 0.231 / 0.235"; RMSE is "-" when
/// nothing matched.
inline std::string summary_line(const MetreReport& r) {
  char buf[128];
  char rmse[32] = "-";
  if (r.mean_rmse) std::snprintf(rmse, sizeof rmse, "%.3f", *r.mean_rmse);
  std::snprintf(buf, sizeof buf, "%.1f%% / %s / %.3f", 100.0 * r.metre_rate, rmse, r.mean_crmse);
  return buf;
}

// --- boundary records -------------------------------------------------------

inline const std::vector<std::string>& boundary_header() {
  static const std::vector<std::string> h{"id1", "id2", "b_stol", "b_ltol", "b_angle", "no_match"};
  return h;
}

/// id1,id2,b_stol,b_ltol,b_angle,no_match. A no-match row carries the ceiling
/// values and no_match=1. Values are written to round-trip exactly.
class BoundaryCsvWriter {
 public:
  explicit BoundaryCsvWriter(std::ostream& out) : out_(out) { out_ << csv_row(boundary_header()); }

  void write(const BoundaryRecord& r) {
    const bool none = !r.matched();
    out_ << csv_row({r.id1, r.id2, format_exact(r.b_stol.value_or(kBoundaryCeiling.stol)),
                     format_exact(r.b_ltol.value_or(kBoundaryCeiling.ltol)),
                     format_exact(r.b_angle.value_or(kBoundaryCeiling.angle_tol)), none ? "1" : "0"});
  }

 private:
  std::ostream& out_;
};

inline std::vector<BoundaryRecord> read_boundaries_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || parse_csv_row(line, 1) != boundary_header())
    throw ParseError("boundary file header must be id1,id2,b_stol,b_ltol,b_angle,no_match", 1);
  std::vector<BoundaryRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = parse_csv_row(line, line_no);
    if (f.size() != 6) throw ParseError("expected 6 fields, found " + std::to_string(f.size()), line_no);
    BoundaryRecord r{f[0], f[1], std::nullopt, std::nullopt, std::nullopt};
    if (f[5] == "0") {
      r.b_stol = to_double(f[2]);
      r.b_ltol = to_double(f[3]);
      r.b_angle = to_double(f[4]);
      if (!r.b_stol || !r.b_ltol || !r.b_angle) throw ParseError("bad boundary value", line_no);
    } else if (f[5] != "1") {
      throw ParseError("no_match must be 0 or 1", line_no);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// --- dedup ------------------------------------------------------------------

/// {clusters: [{representative, members}], thresholds, [enantiomorphs]}.
inline json clusters_json(const DedupReport& rep, const DedupThresholds& th, bool screened) {
  json clusters = json::array();
  for (const auto& c : rep.result.clusters)
    clusters.push_back({{"representative", c.representative_id}, {"members", c.member_ids}});
  json out{{"clusters", std::move(clusters)},
           {"thresholds", {{"stol", th.t_stol}, {"ltol", th.t_ltol}, {"angle_tol", th.t_angle}}}};
  if (screened) {
    json en = json::array();
    for (const auto& c : rep.enantiomorphs)
      en.push_back({{"pair", {c.pair.first, c.pair.second}},
                    {"rmse_improper", c.rmse_improper ? json(*c.rmse_improper) : json(nullptr)},
                    {"rmse_proper_only", c.rmse_proper_only ? json(*c.rmse_proper_only) : json(nullptr)},
                    {"flagged", c.flagged}});
    out["enantiomorphs"] = std::move(en);
  }
  return out;
}

// --- sweeps and curves ------------------------------------------------------

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = csv_row({"ltol", "stol", "angle_tol", "metre_rate", "mean_rmse", "mean_crmse"});
  for (const auto& r : rows)
    out += csv_row({format_sig6(r.ltol), format_sig6(r.stol), format_sig6(r.angle_tol), format_sig6(r.metre_rate),
                    r.mean_rmse ? format_sig6(*r.mean_rmse) : "", format_sig6(r.mean_crmse)});
  return out;
}

inline std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::string out = csv_row({"parameter", "tolerance", "fraction_unique", "density"});
  for (const auto& r : rows)
    out += csv_row({to_string(r.parameter), format_sig6(r.tolerance), format_sig6(r.fraction_unique),
                    format_sig6(r.density)});
  return out;
}

// --- splits -----------------------------------------------------------------

/// {mode, seed, ratios, [direction], sizes, n_arity_distributions, warnings}.
inline json split_manifest(const SplitSpec& spec, const SplitAssignment& a, const std::vector<Structure>& dataset) {
  json sizes, dists;
  for (std::size_t k = 0; k < 3; ++k) {
    sizes[kSplitNames[k]] = a.parts[k].size();
    json d = json::object();
    if (!a.parts[k].empty())
      for (const auto& [arity, frac] : n_arity_distribution(dataset, a.parts[k])) d[std::to_string(arity)] = frac;
    dists[kSplitNames[k]] = std::move(d);
  }
  json out{{"mode", to_string(spec.mode)},
           {"seed", spec.seed},
           {"ratios", {spec.ratios[0], spec.ratios[1], spec.ratios[2]}},
           {"sizes", std::move(sizes)},
           {"n_arity_distributions", std::move(dists)},
           {"warnings", a.warnings}};
  if (spec.mode == SplitMode::n_ordered) out["direction"] = to_string(spec.direction);
  return out;
}

}  // namespace xtal::io
