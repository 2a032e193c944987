#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "planted.hpp"
#include "support.hpp"
#include "xtal/cli.hpp"

using namespace xtal;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome xtal_run(std::vector<std::string> args) {
  args.insert(args.begin(), "xtal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("xtal_cli_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) { return io::read_file(path); }

std::vector<Structure> corpus(std::uint64_t seed, std::size_t n, const std::string& prefix) {
  std::mt19937_64 rng(seed);
  std::vector<Structure> v;
  for (std::size_t i = 0; i < n; ++i)
    v.push_back(testing::random_structure_of(rng, testing::silicon_oxide(1 + i % 3), prefix + std::to_string(i)));
  return v;
}

}  // namespace

TEST_CASE("grid and ratio syntax", "[cli]") {
  const auto g = cli::parse_grid("0.1:0.5:0.05");
  REQUIRE(g.size() == 9);
  REQUIRE(g.front() == 0.1);
  REQUIRE(g.back() == 0.5);
  REQUIRE(cli::parse_grid("5:30:5") == std::vector<double>{5, 10, 15, 20, 25, 30});
  REQUIRE(cli::parse_grid("0:0.3:0.1").back() == 0.3);
  REQUIRE(cli::parse_grid("0.2,0.1,0.2") == std::vector<double>{0.1, 0.2});
  REQUIRE(cli::parse_grid("0.4") == std::vector<double>{0.4});
  REQUIRE_THROWS_AS(cli::parse_grid("1:0:0.1"), CLI::ValidationError);
  REQUIRE_THROWS_AS(cli::parse_grid("0:1:0"), CLI::ValidationError);
  REQUIRE_THROWS_AS(cli::parse_grid("0:1"), CLI::ValidationError);
  REQUIRE_THROWS_AS(cli::parse_grid("a,b"), CLI::ValidationError);

  const auto r = cli::parse_ratios("60,20,20");
  REQUIRE(r[0] == Catch::Approx(0.6));
  REQUIRE(r[0] + r[1] + r[2] == Catch::Approx(1.0));
  REQUIRE(cli::parse_ratios("0.8,0.1,0.1")[1] == Catch::Approx(0.1));
  REQUIRE_THROWS_AS(cli::parse_ratios("60,40"), CLI::ValidationError);
  REQUIRE_THROWS_AS(cli::parse_ratios("60,40,0"), CLI::ValidationError);
}

TEST_CASE("match subcommand", "[cli]") {
  TempDir dir;
  std::mt19937_64 rng(1);
  const auto s = testing::random_structure(rng, 6, 2, "a");
  io::write_file(dir / "a.cif", io::write_cif_p1(s));
  const auto r = xtal_run({"match", dir / "a.cif", dir / "a.cif"});
  REQUIRE(r.code == 0);
  const auto j = io::json::parse(r.out);
  REQUIRE(j["matched"] == true);
  REQUIRE(j["rmse"].get<double>() < 1e-12);
  REQUIRE(j["proper"] == true);
  REQUIRE(r.out.back() == '\n');
  REQUIRE(r.out.find('\n') == r.out.size() - 1);

  io::write_dataset_jsonl({testing::chiral_helix()}, dir / "h.jsonl");
  io::write_dataset_jsonl({mirror(testing::chiral_helix("m"))}, dir / "m.jsonl");
  const auto free = io::json::parse(xtal_run({"match", dir / "h.jsonl", dir / "m.jsonl"}).out);
  REQUIRE(free["matched"] == true);
  REQUIRE(free["proper"] == false);
  const auto proper = xtal_run({"match", dir / "h.jsonl", dir / "m.jsonl", "--proper-only"});
  const auto pj = io::json::parse(proper.out);
  REQUIRE((pj["matched"] == false || pj["rmse"].get<double>() > 1e-3));
}

TEST_CASE("metric subcommands", "[cli]") {
  TempDir dir;
  const auto ref = corpus(2, 6, "r");
  io::write_dataset_jsonl(ref, dir / "ref.jsonl");

  SECTION("nothing matches") {
    std::mt19937_64 rng(4);
    std::vector<Structure> gen;
    for (int i = 0; i < 4; ++i) gen.push_back(testing::random_structure_of(rng, {"C", "C"}, "g" + std::to_string(i)));
    io::write_dataset_jsonl(gen, dir / "gen.jsonl");
    const auto r = xtal_run({"metre", "--gen", dir / "gen.jsonl", "--ref", dir / "ref.jsonl", "-o", dir / "rep.json"});
    REQUIRE(r.code == 0);
    REQUIRE(r.out == "0.0% / - / 0.500\n");
    const auto rep = io::report_from_json(io::json::parse(slurp(dir / "rep.json")));
    REQUIRE(rep.metre_rate == 0);
    REQUIRE(rep.per_ref.size() == 6);
  }
  SECTION("self-generation, csv report and job invariance") {
    const auto a = xtal_run({"metre", "-g", dir / "ref.jsonl", "-r", dir / "ref.jsonl", "-o", dir / "a.csv", "-j", "1"});
    const auto b = xtal_run({"metre", "-g", dir / "ref.jsonl", "-r", dir / "ref.jsonl", "-o", dir / "b.csv", "-j", "4"});
    REQUIRE(a.code == 0);
    REQUIRE(a.out == "100.0% / 0.000 / 0.000\n");
    REQUIRE(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    REQUIRE(slurp(dir / "a.csv").rfind("ref_id,gen_id,rmse\n", 0) == 0);
    const auto mr = xtal_run({"match-rate", "-g", dir / "ref.jsonl", "-r", dir / "ref.jsonl"});
    REQUIRE(mr.code == 0);
    REQUIRE(mr.out == a.out);
  }
  SECTION("k-match groups consecutive entries") {
    std::mt19937_64 rng(5);
    std::vector<Structure> gen;
    for (const auto& s : ref) {
      gen.push_back(synth_equivalent_cell(s, 11).with_id(s.id() + "-a"));
      gen.push_back(testing::random_structure_of(rng, {"C"}, s.id() + "-b"));
    }
    io::write_dataset_jsonl(gen, dir / "k.jsonl");
    const auto r = xtal_run({"k-match", "--k", "2", "-g", dir / "k.jsonl", "-r", dir / "ref.jsonl"});
    REQUIRE(r.code == 0);
    REQUIRE(r.out.rfind("100.0% / ", 0) == 0);
    const auto bad = xtal_run({"k-match", "--k", "3", "-g", dir / "k.jsonl", "-r", dir / "ref.jsonl"});
    REQUIRE(bad.code == 2);
    REQUIRE_THAT(bad.err, ContainsSubstring("k-match needs"));
  }
}

TEST_CASE("dedup, curves and sweep are byte-deterministic", "[cli]") {
  TempDir dir;
  const auto planted = testing::planted_corpus(21, 8, 3);
  io::write_dataset_jsonl(planted.structures, dir / "data.jsonl");

  auto dedup = [&](const std::string& tag, const std::string& jobs) {
    return xtal_run({"dedup", dir / "data.jsonl", "--boundaries", dir / ("b" + tag + ".csv"), "-o",
                     dir / ("u" + tag + ".jsonl"), "--clusters", dir / ("c" + tag + ".json"), "--enantiomorphs", "-j",
                     jobs});
  };
  REQUIRE(dedup("1", "1").code == 0);
  REQUIRE(dedup("4", "4").code == 0);
  for (const char* f : {"b%s.csv", "u%s.jsonl", "c%s.json"}) {
    char a[32], b[32];
    std::snprintf(a, sizeof a, f, "1");
    std::snprintf(b, sizeof b, f, "4");
    REQUIRE(slurp(dir / a) == slurp(dir / b));
  }
  std::istringstream unique_in(slurp(dir / "u1.jsonl"));
  REQUIRE(io::read_dataset_jsonl(unique_in).size() == planted.n_bases);
  const auto clusters = io::json::parse(slurp(dir / "c1.json"));
  REQUIRE(clusters["clusters"].size() == planted.clusters.size());

  const std::vector<std::string> curve_args{"curves", "--boundaries", dir / "b1.csv", "--grid", "0:0.05:0.01",
                                            "--n-structures", std::to_string(planted.structures.size())};
  const auto c1 = xtal_run(curve_args);
  REQUIRE(c1.code == 0);
  REQUIRE(c1.out == xtal_run(curve_args).out);
  REQUIRE(c1.out.rfind("parameter,tolerance,fraction_unique,density\n", 0) == 0);
  REQUIRE(std::count(c1.out.begin(), c1.out.end(), '\n') == 1 + 3 * 6);

  const auto ref = corpus(6, 5, "r");
  std::vector<Structure> gen;
  for (const auto& s : ref) {
    SynthOptions o;
    o.noise_std = 0.1;
    gen.push_back(synth_equivalent_cell(s, 3, o).with_id(s.id() + "g"));
  }
  io::write_dataset_jsonl(ref, dir / "ref.jsonl");
  io::write_dataset_jsonl(gen, dir / "gen.jsonl");
  const std::vector<std::string> sweep{"sweep", "-g", dir / "gen.jsonl", "-r", dir / "ref.jsonl", "--stol",
                                       "0.1:0.3:0.1", "--ltol", "0.2,0.3", "--angle", "10"};
  auto s1 = sweep, s4 = sweep;
  s1.insert(s1.end(), {"-j", "1"});
  s4.insert(s4.end(), {"-j", "4"});
  const auto w1 = xtal_run(s1), w4 = xtal_run(s4);
  REQUIRE(w1.code == 0);
  REQUIRE(w1.out == w4.out);
  REQUIRE(std::count(w1.out.begin(), w1.out.end(), '\n') == 1 + 3 * 2);
}

TEST_CASE("split and synth are byte-deterministic per seed", "[cli]") {
  TempDir dir;
  const auto planted = testing::planted_corpus(17, 30, 3);
  io::write_dataset_jsonl(planted.structures, dir / "data.jsonl");

  for (const char* mode : {"random", "polymorph", "polymorph-stratified", "n-ordered"}) {
    const std::vector<std::string> base{"split", dir / "data.jsonl", "--mode", mode, "--ratios", "60,20,20",
                                        "--seed", "1"};
    auto a = base, b = base;
    a.insert(a.end(), {"-o", dir / "a"});
    b.insert(b.end(), {"-o", dir / "b"});
    INFO(mode);
    REQUIRE(xtal_run(a).code == 0);
    REQUIRE(xtal_run(b).code == 0);
    std::size_t total = 0;
    for (const char* part : {"_train.txt", "_val.txt", "_test.txt", "_manifest.json"}) {
      const auto text = slurp(dir / (std::string("a") + part));
      REQUIRE(text == slurp(dir / (std::string("b") + part)));
      if (std::string(part) != "_manifest.json") total += static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    }
    REQUIRE(total == planted.structures.size());
    REQUIRE(io::json::parse(slurp(dir / "a_manifest.json"))["mode"] == mode);
  }

  io::write_dataset_jsonl({planted.structures.front()}, dir / "one.jsonl");
  const std::vector<std::string> synth{"synth", dir / "one.jsonl", "--count", "5", "--seed", "9", "--supercell-max", "2"};
  const auto x = xtal_run(synth), y = xtal_run(synth);
  REQUIRE(x.code == 0);
  REQUIRE(x.out == y.out);
  std::istringstream in(x.out);
  const auto cells = io::read_dataset_jsonl(in);
  REQUIRE(cells.size() == 5);
  for (const auto& c : cells) REQUIRE(match_structures(planted.structures.front(), c).has_value());
  auto other = synth;
  other[5] = "10";
  REQUIRE(xtal_run(other).out != x.out);
}

TEST_CASE("exit codes", "[cli]") {
  TempDir dir;
  io::write_file(dir / "bad.jsonl", "{\"id\": \"a\"}\n");
  io::write_file(dir / "bad.cif", "data_x\n_cell_length_a 1\n");

  REQUIRE(xtal_run({}).code == 1);
  REQUIRE(xtal_run({"frobnicate"}).code == 1);
  const auto unknown_flag = xtal_run({"match", "a", "b", "--fuzzy"});
  REQUIRE(unknown_flag.code == 1);
  REQUIRE_THAT(unknown_flag.err, ContainsSubstring("Usage"));
  REQUIRE(xtal_run({"split", dir / "bad.jsonl", "--mode", "sideways", "-o", dir / "p"}).code == 1);
  REQUIRE(xtal_run({"curves", "--boundaries", dir / "b.csv", "--grid", "1:0:1"}).code == 1);
  REQUIRE(xtal_run({"--help"}).code == 0);

  REQUIRE(xtal_run({"match", dir / "missing.cif", dir / "missing.cif"}).code == 2);
  const auto parse = xtal_run({"dedup", dir / "bad.jsonl"});
  REQUIRE(parse.code == 2);
  REQUIRE_THAT(parse.err, ContainsSubstring("line 1"));
  REQUIRE(xtal_run({"match", dir / "bad.cif", dir / "bad.cif"}).code == 2);
  REQUIRE(xtal_run({"match", dir / "x.pdb", dir / "x.pdb"}).code == 2);

  ::setenv("XTAL_LOG", "loud", 1);
  REQUIRE(xtal_run({"--help"}).code == 1);
  ::setenv("XTAL_LOG", "error", 1);
  TempDir d2;
  io::write_dataset_jsonl(corpus(1, 2, "q"), d2 / "q.jsonl");
  const auto quiet = xtal_run({"metre", "-g", d2 / "q.jsonl", "-r", d2 / "q.jsonl"});
  REQUIRE(quiet.code == 0);
  REQUIRE(quiet.err.empty());
  ::unsetenv("XTAL_LOG");
}
