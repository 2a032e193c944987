#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xtal/dedup.hpp"
#include "xtal/io/load.hpp"
#include "xtal/io/report.hpp"
#include "xtal/metrics.hpp"
#include "xtal/splits.hpp"
#include "xtal/synth.hpp"

namespace xtal::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

enum class LogLevel { error = 0, info = 1, debug = 2 };

class Logger {
 public:
  Logger(std::ostream& err, LogLevel level) : err_(err), level_(level) {}
  void info(const std::string& msg) const { emit(LogLevel::info, "info", msg); }
  void debug(const std::string& msg) const { emit(LogLevel::debug, "debug", msg); }
  void error(const std::string& msg) const { emit(LogLevel::error, "error", msg); }

 private:
  void emit(LogLevel at, const char* tag, const std::string& msg) const {
    if (static_cast<int>(at) <= static_cast<int>(level_)) err_ << "xtal: " << tag << ": " << msg << "\n";
  }
  std::ostream& err_;
  LogLevel level_;
};

/// Reads XTAL_LOG; unset means info.
inline std::optional<LogLevel> log_level_from_env() {
  const char* v = std::getenv("XTAL_LOG");
  if (!v || !*v) return LogLevel::info;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  return std::nullopt;
}

/// "start:stop:step" (stop included within 1e-12), "a,b,c" or a single value.
inline std::vector<double> parse_grid(const std::string& text) {
  auto num = [&](std::string_view s) {
    const auto v = io::to_double(io::trim(s));
    if (!v || !std::isfinite(*v)) throw CLI::ValidationError("bad number '" + std::string(s) + "' in grid '" + text + "'");
    return *v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> f;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) f.push_back(part);
    if (f.size() != 3) throw CLI::ValidationError("grid '" + text + "' must be start:stop:step");
    const double start = num(f[0]), stop = num(f[1]), step = num(f[2]);
    if (!(step > 0) || stop < start) throw CLI::ValidationError("grid '" + text + "' needs step > 0 and stop >= start");
    for (std::size_t i = 0;; ++i) {
      double v = start + static_cast<double>(i) * step;
      if (v > stop + 1e-12) break;
      if (std::abs(v - stop) <= 1e-12) v = stop;
      out.push_back(v);
    }
  } else {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(num(part));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  if (out.empty()) throw CLI::ValidationError("empty grid '" + text + "'");
  return out;
}

/// "60,20,20" or "0.6,0.2,0.2"; normalized to sum 1.
inline std::array<double, 3> parse_ratios(const std::string& text) {
  std::array<double, 3> r{};
  std::stringstream ss(text);
  std::size_t k = 0;
  for (std::string part; std::getline(ss, part, ','); ++k) {
    const auto v = io::to_double(io::trim(part));
    if (k >= 3 || !v || !(*v > 0)) throw CLI::ValidationError("--ratios needs three positive numbers, got '" + text + "'");
    r[k] = *v;
  }
  if (k != 3) throw CLI::ValidationError("--ratios needs three positive numbers, got '" + text + "'");
  const double sum = r[0] + r[1] + r[2];
  for (auto& v : r) v /= sum;
  return r;
}

inline Structure single_structure(const std::string& path) {
  auto v = io::load_structures(path);
  if (v.size() != 1)
    throw ParseError(path + " holds " + std::to_string(v.size()) + " structures; expected exactly one");
  return std::move(v.front());
}

inline std::vector<Structure> structure_list(const std::string& path) {
  auto v = io::load_structures(path);
  if (v.empty()) throw ParseError(path + " holds no structures");
  return v;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

inline void emit(std::ostream& out, const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    out << content;
  else
    io::write_file(path, content);
}

inline void add_tolerances(CLI::App* app, MatchTolerances& t) {
  app->add_option("--ltol", t.ltol, "fractional lattice-length tolerance")->capture_default_str();
  app->add_option("--stol", t.stol, "site tolerance in units of (V/N)^(1/3)")->capture_default_str();
  app->add_option("--angle-tol", t.angle_tol, "lattice-angle tolerance in degrees")->capture_default_str();
}

inline void add_jobs(CLI::App* app, std::size_t& jobs) {
  app->add_option("--jobs,-j", jobs, "worker threads (0 = all cores)")->capture_default_str();
}

/// Runs the command line and returns the process exit code. Data goes to
/// `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const auto level = log_level_from_env();
  if (!level) {
    err << "xtal: error: XTAL_LOG must be one of error, info, debug\n";
    return kUsage;
  }
  const Logger log(err, *level);

  CLI::App app{"Periodic crystal-structure matching, benchmark metrics, deduplication and dataset splits", "xtal"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  std::function<void()> action;

  // match
  struct {
    std::string a, b;
    MatchTolerances tol;
    bool proper_only = false;
  } m;
  auto* c_match = app.add_subcommand("match", "match two structures and print one-line JSON");
  c_match->add_option("A", m.a, "first structure file")->required();
  c_match->add_option("B", m.b, "second structure file")->required();
  add_tolerances(c_match, m.tol);
  c_match->add_flag("--proper-only", m.proper_only, "forbid improper rotations");
  c_match->callback([&] {
    action = [&] {
      const auto s1 = single_structure(m.a), s2 = single_structure(m.b);
      const auto r = match_structures(s1, s2, m.tol, MatchOptions{!m.proper_only});
      io::json j{{"matched", r.has_value()},
                 {"rmse", r ? io::json(r->rmse) : io::json(nullptr)},
                 {"max_dist", r ? io::json(r->max_dist) : io::json(nullptr)},
                 {"proper", r ? io::json(r->proper) : io::json(nullptr)}};
      out << j.dump() << "\n";
    };
  });

  // metre, match-rate, k-match
  struct {
    std::string gen, ref, output;
    MatchTolerances tol;
    std::size_t jobs = 0, k = 1;
  } mt;
  auto report_out = [&](const MetreReport& r) {
    if (!mt.output.empty()) {
      const bool csv = mt.output.size() >= 4 && mt.output.substr(mt.output.size() - 4) == ".csv";
      io::write_report(r, csv ? io::ReportFormat::csv : io::ReportFormat::json, mt.output);
      log.info("wrote " + mt.output);
    }
    log.info(std::to_string(r.n_ref_match) + " of " + std::to_string(r.per_ref.size()) + " references matched");
    out << io::summary_line(r) << "\n";
  };
  auto metric_command = [&](const char* name, const char* help) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--gen,-g", mt.gen, "generated structures")->required();
    c->add_option("--ref,-r", mt.ref, "reference structures")->required();
    c->add_option("-o,--output", mt.output, "report path (.json or .csv)");
    add_tolerances(c, mt.tol);
    add_jobs(c, mt.jobs);
    return c;
  };
  metric_command("metre", "METRe, mean RMSE and cRMSE over an unordered generated set")->callback([&] {
    action = [&] { report_out(metre(structure_list(mt.gen), structure_list(mt.ref), mt.tol, mt.jobs)); };
  });
  metric_command("match-rate", "index-aligned match rate")->callback([&] {
    action = [&] {
      report_out(standard_match_rate(structure_list(mt.gen), structure_list(mt.ref), mt.tol, mt.jobs));
    };
  });
  auto* c_k = metric_command("k-match", "k candidates per reference, taken as consecutive generated entries");
  c_k->add_option("--k", mt.k, "candidates per reference")->required()->check(CLI::PositiveNumber);
  c_k->callback([&] {
    action = [&] {
      const auto gen = structure_list(mt.gen);
      const auto ref = structure_list(mt.ref);
      if (gen.size() != mt.k * ref.size())
        throw ParseError("k-match needs k * " + std::to_string(ref.size()) + " = " + std::to_string(mt.k * ref.size()) +
                         " generated structures, found " + std::to_string(gen.size()));
      std::vector<std::vector<Structure>> groups(ref.size());
      for (std::size_t i = 0; i < gen.size(); ++i) groups[i / mt.k].push_back(gen[i]);
      report_out(k_match_rate(groups, ref, KMatchConfig{mt.k}, mt.tol, mt.jobs));
    };
  });

  // dedup
  struct {
    std::string data, output, clusters, boundaries;
    DedupThresholds th;
    bool enantiomorphs = false;
    std::size_t jobs = 0;
  } d;
  auto* c_dedup = app.add_subcommand("dedup", "remove duplicate structures by match-boundary thresholds");
  c_dedup->add_option("DATA", d.data, "dataset file")->required();
  c_dedup->add_option("--stol-thresh", d.th.t_stol, "stol boundary threshold")->capture_default_str();
  c_dedup->add_option("--ltol-thresh", d.th.t_ltol, "ltol boundary threshold")->capture_default_str();
  c_dedup->add_option("--angle-thresh", d.th.t_angle, "angle boundary threshold")->capture_default_str();
  c_dedup->add_flag("--enantiomorphs", d.enantiomorphs, "keep mirror-image pairs apart");
  c_dedup->add_option("--boundaries", d.boundaries, "write per-pair boundaries as CSV");
  c_dedup->add_option("-o,--output", d.output, "unique structures as JSONL (default stdout)");
  c_dedup->add_option("--clusters", d.clusters, "duplicate clusters as JSON");
  add_jobs(c_dedup, d.jobs);
  c_dedup->callback([&] {
    action = [&] {
      const auto data = io::load_structures(d.data);
      std::ofstream bfile;
      std::unique_ptr<io::BoundaryCsvWriter> writer;
      if (!d.boundaries.empty()) {
        bfile = open_output(d.boundaries);
        writer = std::make_unique<io::BoundaryCsvWriter>(bfile);
      }
      const auto rep = deduplicate(data, d.th, d.enantiomorphs, d.jobs, [&](const BoundaryRecord& r) {
        if (writer) writer->write(r);
      });
      if (writer) {
        bfile.close();
        if (!bfile) throw IoError("failed writing '" + d.boundaries + "'");
      }
      const auto& unique = rep.result.unique;
      emit(out, d.output, io::dataset_jsonl(unique));
      if (!d.clusters.empty()) io::write_file(d.clusters, io::clusters_json(rep, d.th, d.enantiomorphs).dump(2) + "\n");
      std::size_t flagged = 0;
      for (const auto& c : rep.enantiomorphs) flagged += c.flagged;
      log.info(std::to_string(rep.n_records) + " pairs compared, " + std::to_string(rep.duplicate_pairs.size()) +
               " duplicate pairs, " + std::to_string(rep.result.clusters.size()) + " clusters");
      if (d.enantiomorphs) log.info(std::to_string(flagged) + " enantiomorph pairs kept apart");
      log.info(std::to_string(unique.size()) + " unique of " + std::to_string(data.size()));
    };
  });

  // curves
  struct {
    std::string boundaries, grid = "0:0.5:0.005", parameter = "all", output;
    std::size_t n_structures = 0;
    double bandwidth = 0;
  } cv;
  auto* c_curves = app.add_subcommand("curves", "uniqueness curves from a boundary CSV");
  c_curves->add_option("--boundaries", cv.boundaries, "boundary CSV from dedup")->required();
  c_curves->add_option("--grid", cv.grid, "tolerance grid start:stop:step or a,b,c")->capture_default_str();
  c_curves->add_option("--parameter", cv.parameter, "stol, ltol, angle_tol or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"stol", "ltol", "angle_tol", "all"}));
  c_curves->add_option("--n-structures", cv.n_structures, "dataset size (default: distinct ids in the file)");
  c_curves->add_option("--bandwidth", cv.bandwidth, "density bandwidth (default: grid step)");
  c_curves->add_option("-o,--output", cv.output, "CSV path (default stdout)");
  c_curves->callback([&] {
    action = [&] {
      const auto grid = parse_grid(cv.grid);
      std::ifstream in(cv.boundaries, std::ios::binary);
      if (!in) throw IoError("cannot open '" + cv.boundaries + "' for reading");
      const auto records = io::read_boundaries_csv(in);
      std::size_t n = cv.n_structures;
      if (n == 0) {
        std::set<std::string> ids;
        for (const auto& r : records) ids.insert(r.id1), ids.insert(r.id2);
        n = ids.size();
        log.info("n_structures taken as " + std::to_string(n) + " distinct ids in the boundary file");
      }
      std::optional<double> bw;
      if (cv.bandwidth > 0) bw = cv.bandwidth;
      std::vector<CurveRow> rows;
      for (TolParam p : {TolParam::stol, TolParam::ltol, TolParam::angle_tol})
        if (cv.parameter == "all" || cv.parameter == to_string(p)) {
          const auto part = uniqueness_curve(records, n, p, grid, bw);
          rows.insert(rows.end(), part.begin(), part.end());
        }
      emit(out, cv.output, io::curves_csv(rows));
    };
  });

  // split
  struct {
    std::string data, mode = "random", direction = "low-to-high", ratios = "60,20,20", prefix;
    std::uint64_t seed = 0;
  } sp;
  auto* c_split = app.add_subcommand("split", "train/val/test split of a dataset");
  c_split->add_option("DATA", sp.data, "dataset file")->required();
  c_split->add_option("--mode", sp.mode, "split mode")
      ->capture_default_str()
      ->check(CLI::IsMember({"random", "polymorph", "polymorph-stratified", "n-ordered"}));
  c_split->add_option("--direction", sp.direction, "n-ordered direction")
      ->capture_default_str()
      ->check(CLI::IsMember({"low-to-high", "high-to-low"}));
  c_split->add_option("--ratios", sp.ratios, "train,val,test ratios")->capture_default_str();
  c_split->add_option("--seed", sp.seed, "random seed")->capture_default_str();
  c_split->add_option("-o,--output", sp.prefix, "output prefix")->required();
  c_split->callback([&] {
    action = [&] {
      SplitSpec spec;
      spec.ratios = parse_ratios(sp.ratios);
      spec.seed = sp.seed;
      for (SplitMode mode : {SplitMode::random, SplitMode::polymorph, SplitMode::polymorph_stratified,
                             SplitMode::n_ordered})
        if (sp.mode == to_string(mode)) spec.mode = mode;
      spec.direction = sp.direction == "high-to-low" ? SplitDirection::high_to_low : SplitDirection::low_to_high;
      const auto data = io::load_structures(sp.data);
      const auto a = split_dataset(data, spec);
      for (std::size_t k = 0; k < 3; ++k) {
        std::string ids;
        for (const auto& id : a.parts[k]) ids += id + "\n";
        io::write_file(sp.prefix + "_" + kSplitNames[k] + ".txt", ids);
      }
      io::write_file(sp.prefix + "_manifest.json", io::split_manifest(spec, a, data).dump(2) + "\n");
      for (const auto& w : a.warnings) log.error("warning: " + w);
      log.info("train/val/test = " + std::to_string(a.parts[0].size()) + "/" + std::to_string(a.parts[1].size()) +
               "/" + std::to_string(a.parts[2].size()));
    };
  });

  // sweep
  struct {
    std::string gen, ref, stol = "0.1:0.5:0.05", ltol = "0.1:0.5:0.05", angle = "5:30:5", output;
    std::size_t jobs = 0;
  } sw;
  auto* c_sweep = app.add_subcommand("sweep", "METRe over a tolerance grid as CSV");
  c_sweep->add_option("--gen,-g", sw.gen, "generated structures")->required();
  c_sweep->add_option("--ref,-r", sw.ref, "reference structures")->required();
  c_sweep->add_option("--stol", sw.stol, "stol grid")->capture_default_str();
  c_sweep->add_option("--ltol", sw.ltol, "ltol grid")->capture_default_str();
  c_sweep->add_option("--angle", sw.angle, "angle_tol grid")->capture_default_str();
  c_sweep->add_option("-o,--output", sw.output, "CSV path (default stdout)");
  add_jobs(c_sweep, sw.jobs);
  c_sweep->callback([&] {
    action = [&] {
      const SweepGrid grid{parse_grid(sw.ltol), parse_grid(sw.stol), parse_grid(sw.angle)};
      const auto rows = tolerance_sweep(structure_list(sw.gen), structure_list(sw.ref), grid, sw.jobs);
      emit(out, sw.output, io::sweep_csv(rows));
    };
  });

  // synth
  struct {
    std::string base, output;
    std::size_t count = 1;
    std::uint64_t seed = 0;
    bool proper_only = false;
    double noise = 0;
    int supercell_max = 1;
  } sy;
  auto* c_synth = app.add_subcommand("synth", "write equivalent cells of the input structures as JSONL");
  c_synth->add_option("BASE", sy.base, "structure file")->required();
  c_synth->add_option("--count,-n", sy.count, "cells per input structure")->capture_default_str();
  c_synth->add_option("--seed", sy.seed, "random seed")->capture_default_str();
  c_synth->add_flag("--proper-only", sy.proper_only, "no reflections");
  c_synth->add_option("--noise", sy.noise, "Gaussian noise per coordinate (Angstrom)")->capture_default_str();
  c_synth->add_option("--supercell-max", sy.supercell_max, "largest supercell multiplier")->capture_default_str();
  c_synth->add_option("-o,--output", sy.output, "JSONL path (default stdout)");
  c_synth->callback([&] {
    action = [&] {
      SynthOptions opts;
      opts.proper_only = sy.proper_only;
      opts.noise_std = sy.noise;
      opts.supercell_max = sy.supercell_max;
      std::mt19937_64 seeds(sy.seed);
      std::vector<Structure> cells;
      for (const auto& s : structure_list(sy.base))
        for (std::size_t k = 0; k < sy.count; ++k)
          cells.push_back(synth_equivalent_cell(s, seeds(), opts).with_id(s.id() + "-" + std::to_string(k)));
      emit(out, sy.output, io::dataset_jsonl(cells));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "xtal: error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsage;
  }

  try {
    action();
    return kOk;
  } catch (const CLI::ValidationError& e) {
    log.error(e.what());
    return kUsage;
  } catch (const ParseError& e) {
    log.error(e.what());
    return kData;
  } catch (const IoError& e) {
    log.error(e.what());
    return kData;
  } catch (const ContractError& e) {
    log.error(e.what());
    return kData;
  } catch (const std::exception& e) {
    log.error(std::string("internal error: ") + e.what());
    return kInternal;
  }
}

}  // namespace xtal::cli
