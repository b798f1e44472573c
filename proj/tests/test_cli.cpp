#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "dcpl/corpus.hpp"
#include "dcpl/scoring.hpp"
#include "helpers.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kCli = DCPL_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

RunResult run(const std::string& args) {
  static int counter = 0;
  fs::path out = fs::temp_directory_path() / ("cli-out-" + std::to_string(::getpid()) + "-" +
                                              std::to_string(counter));
  fs::path err = fs::temp_directory_path() / ("cli-err-" + std::to_string(::getpid()) + "-" +
                                              std::to_string(counter));
  ++counter;
  std::string cmd =
      std::string(kCli) + " " + args + " >" + out.string() + " 2>" + err.string();
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

// One throwaway working directory for the whole suite.
fs::path workdir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("dcpl-cli-suite-" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Lazily built shared fixtures: a toy model and corpus on disk.
const std::string& model_path() {
  static std::string path = [] {
    std::string p = (workdir() / "base.dcpl").string();
    RunResult r = run("init-model --layers 2 --dim 16 --heads 4 --ffn 32 --vocab 23 "
                      "--activation swish --seed 5 --out " + p);
    REQUIRE(r.exit_code == 0);
    return p;
  }();
  return path;
}

const std::string& corpus_path() {
  static std::string path = [] {
    std::string p = (workdir() / "corpus.jsonl").string();
    dcpl::save_corpus(dcpl::random_corpus(6, 2, 6, 23, 11), p);
    return p;
  }();
  return path;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("init-model reports the created checkpoint") {
  std::string p = (workdir() / "fresh.dcpl").string();
  RunResult r = run("init-model --layers 1 --dim 8 --heads 2 --ffn 16 --vocab 9 --seed 3 --out " + p);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(p));
  json summary = json::parse(r.out);
  CHECK(summary["path"] == p);
  CHECK(summary["config"]["model_dim"] == 8);

  // invalid configuration surfaces as a structured validation error
  RunResult bad = run("init-model --layers 1 --dim 9 --heads 2 --ffn 16 --vocab 9 --out " +
                      (workdir() / "bad.dcpl").string());
  CHECK(bad.exit_code == 1);
  json err = json::parse(bad.err);
  CHECK(err["error"] == "InvalidConfig");
}

TEST_CASE("verify passes in double precision and fails with float32 traces") {
  RunResult ok = run("verify --model " + model_path() + " --corpus " + corpus_path());
  CHECK(ok.exit_code == 0);
  json report = json::parse(ok.out);
  CHECK(report["pass"] == true);
  CHECK(report["results"].size() == 2);
  for (const auto& entry : report["results"]) {
    CHECK(entry["pass"] == true);
    CHECK(entry["max_abs_residual"].get<double>() < 1e-8);
    CHECK(entry["tokens"].get<int>() > 0);
  }

  RunResult f32 = run("verify --model " + model_path() + " --corpus " + corpus_path() +
                      " --trace-f32");
  CHECK(f32.exit_code == 2);
  json broken = json::parse(f32.out);
  CHECK(broken["pass"] == false);

  RunResult sl_only = run("verify --model " + model_path() + " --corpus " + corpus_path() +
                          " --decomp sl");
  CHECK(sl_only.exit_code == 0);
  CHECK(json::parse(sl_only.out)["results"].size() == 1);
}

TEST_CASE("decompose emits one record per token and term") {
  RunResult r = run("decompose --model " + model_path() + " --corpus " + corpus_path() +
                    " --decomp sl");
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.out);
  REQUIRE(!lines.empty());
  int vector_rows = 0;
  int verification_rows = 0;
  for (const auto& line : lines) {
    json row = json::parse(line);
    if (row.contains("verification")) {
      ++verification_rows;
      CHECK(row["verification"]["pass"] == true);
    } else {
      ++vector_rows;
      CHECK(row["term"].is_string());
      CHECK(row["vector"].size() == 16);
    }
  }
  CHECK(verification_rows == 6);
  CHECK(vector_rows % 5 == 0);  // five terms per token

  RunResult again = run("decompose --model " + model_path() + " --corpus " + corpus_path() +
                        " --decomp sl");
  CHECK(again.out == r.out);  // byte-identical rerun

  RunResult tok = run("decompose --model " + model_path() + " --corpus " + corpus_path() +
                      " --decomp tok");
  CHECK(tok.exit_code == 0);
  json first = json::parse(lines_of(tok.out)[0]);
  CHECK(first.contains("sublayer"));
}

TEST_CASE("translate produces forced scores or beam outputs") {
  RunResult forced = run("translate --model " + model_path() + " --corpus " + corpus_path() +
                         " --mode forced");
  CHECK(forced.exit_code == 0);
  auto lines = lines_of(forced.out);
  dcpl::Corpus corpus = dcpl::load_corpus(corpus_path());
  REQUIRE(lines.size() == corpus.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json row = json::parse(lines[i]);
    CHECK(row["id"] == corpus[i].id);
    CHECK(row["tokens"].get<std::vector<int>>() == corpus[i].tgt_ids);
    CHECK(row["log_prob"].get<double>() < 0.0);
  }

  RunResult beam = run("translate --model " + model_path() + " --corpus " + corpus_path() +
                       " --mode beam --beam 4");
  CHECK(beam.exit_code == 0);
  for (const auto& line : lines_of(beam.out)) {
    json row = json::parse(line);
    CHECK(row.contains("complete"));
    for (int tok : row["tokens"].get<std::vector<int>>()) CHECK(tok != 0);
  }

  RunResult rerun = run("translate --model " + model_path() + " --corpus " + corpus_path() +
                        " --mode beam --beam 4");
  CHECK(rerun.out == beam.out);
}

TEST_CASE("indicator and series tables share the csv schema") {
  RunResult ind = run("indicators --model " + model_path() + " --corpus " + corpus_path() +
                      " --model-id toy");
  CHECK(ind.exit_code == 0);
  auto lines = lines_of(ind.out);
  REQUIRE(!lines.empty());
  CHECK(lines[0] == "model,checkpoint,decomposition,term,indicator,value");
  CHECK(lines.size() == 1 + 5 * 3);  // five sl terms, three indicators

  std::string second = (workdir() / "other.dcpl").string();
  RunResult r2 = run("init-model --layers 2 --dim 16 --heads 4 --ffn 32 --vocab 23 --seed 6 --out " +
                     second);
  REQUIRE(r2.exit_code == 0);

  std::string series_a = (workdir() / "series-a.csv").string();
  RunResult sa = run("series --models " + model_path() + "," + second + " --corpus " +
                     corpus_path() + " --model-id run-a --term i --indicator nr --out " + series_a);
  CHECK(sa.exit_code == 0);
  auto series_lines = lines_of(slurp(series_a));
  REQUIRE(series_lines.size() == 3);
  CHECK(series_lines[1].find("run-a,0,sl,i,nr,") == 0);
  CHECK(series_lines[2].find("run-a,1,sl,i,nr,") == 0);
}

TEST_CASE("dtw pair and heatmap modes") {
  std::string series_a = (workdir() / "dtw-a.csv").string();
  std::string series_b = (workdir() / "dtw-b.csv").string();
  std::string series_c = (workdir() / "dtw-c.csv").string();
  std::string second = (workdir() / "other.dcpl").string();  // built above
  if (!fs::exists(second)) {
    REQUIRE(run("init-model --layers 2 --dim 16 --heads 4 --ffn 32 --vocab 23 --seed 6 --out " +
                second).exit_code == 0);
  }
  std::string third = (workdir() / "third.dcpl").string();
  REQUIRE(run("init-model --layers 2 --dim 16 --heads 4 --ffn 32 --vocab 23 --seed 7 --out " +
              third).exit_code == 0);

  // distinct checkpoint orders so the three series differ
  std::map<std::string, std::string> orders{
      {"a", model_path() + "," + second + "," + third},
      {"b", second + "," + third + "," + model_path()},
      {"c", third + "," + model_path() + "," + second}};
  for (const auto& [path, id] : std::vector<std::pair<std::string, std::string>>{
           {series_a, "a"}, {series_b, "b"}, {series_c, "c"}}) {
    RunResult r = run("series --models " + orders[id] + " --corpus " + corpus_path() +
                      " --model-id " + id + " --out " + path);
    REQUIRE(r.exit_code == 0);
  }

  RunResult self = run("dtw --series " + series_a + " --series " + series_a +
                       " --term t --indicator mu");
  CHECK(self.exit_code == 0);
  json self_row = json::parse(self.out);
  CHECK(self_row["distance"].get<double>() == 0.0);
  CHECK(self_row["path_length"].get<int>() >= 3);

  RunResult pair = run("dtw --series " + series_a + " --series " + series_b +
                       " --term t --indicator mu");
  CHECK(pair.exit_code == 0);
  CHECK(json::parse(pair.out)["distance"].get<double>() >= 0.0);

  std::string heat = (workdir() / "heat.csv").string();
  RunResult hm = run("dtw --series " + series_a + " --series " + series_b + " --series " +
                     series_c + " --heatmap " + heat);
  CHECK(hm.exit_code == 0);
  auto lines = lines_of(slurp(heat));
  REQUIRE(lines.size() > 1);
  CHECK(lines[0] == "term,indicator,model_row,model_col,z_distance");
  // three models -> three ordered pairs per (term, indicator) group
  CHECK((lines.size() - 1) % 3 == 0);
}

TEST_CASE("permutation test on the worked example") {
  RunResult r = run("permtest --group-a 1,2 --group-b 3,4 --mode exact");
  CHECK(r.exit_code == 0);
  json row = json::parse(r.out);
  CHECK(row["p_value"].get<double>() == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
  CHECK(row["mode"] == "exact");
  CHECK(row["draws"] == 6);

  RunResult mc = run("permtest --group-a 1,2 --group-b 3,4 --mode mc --draws 2000 --seed 9");
  CHECK(mc.exit_code == 0);
  CHECK(json::parse(mc.out)["mode"] == "mc");

  RunResult bad = run("permtest --group-a 1,2 --group-b nope --mode exact");
  CHECK(bad.exit_code == 1);
}

TEST_CASE("score tables feed the correlation protocols") {
  std::string second = (workdir() / "other.dcpl").string();
  if (!fs::exists(second)) {
    REQUIRE(run("init-model --layers 2 --dim 16 --heads 4 --ffn 32 --vocab 23 --seed 6 --out " +
                second).exit_code == 0);
  }
  std::string third = (workdir() / "third.dcpl").string();
  if (!fs::exists(third)) {
    REQUIRE(run("init-model --layers 2 --dim 16 --heads 4 --ffn 32 --vocab 23 --seed 7 --out " +
                third).exit_code == 0);
  }
  std::string models = model_path() + "," + second + "," + third;

  std::string corpus_scores = (workdir() / "scores-corpus.csv").string();
  RunResult sc = run("score --models " + models + " --corpus " + corpus_path() +
                     " --metric chrf --granularity corpus --beam 3 --out " + corpus_scores);
  CHECK(sc.exit_code == 0);
  dcpl::ScoreTable table = dcpl::load_scores(corpus_scores);
  CHECK(table.granularity == dcpl::Granularity::Corpus);
  CHECK(table.checkpoints() == std::vector<int>{0, 1, 2});

  std::string series_a = (workdir() / "corr-series.csv").string();
  REQUIRE(run("series --models " + models + " --corpus " + corpus_path() +
              " --model-id corr --term i --indicator mu --out " + series_a).exit_code == 0);
  RunResult corr = run("correlate-corpus --series " + series_a + " --scores " + corpus_scores +
                       " --num-pairs 2 --seed 3");
  CHECK(corr.exit_code == 0);
  json row = json::parse(corr.out);
  CHECK(row["correlation"].get<double>() >= 0.0);
  CHECK(row["correlation"].get<double>() <= 1.0);
  CHECK(row["num_pairs"] == 2);

  std::string sent_scores = (workdir() / "scores-sentence.csv").string();
  RunResult ss = run("score --models " + models + " --corpus " + corpus_path() +
                     " --metric chrf --granularity sentence --beam 3 --out " + sent_scores);
  CHECK(ss.exit_code == 0);
  dcpl::ScoreTable sent_table = dcpl::load_scores(sent_scores);
  CHECK(sent_table.granularity == dcpl::Granularity::Sentence);
  CHECK(sent_table.sentence_ids().size() == 6);

  RunResult cs = run("correlate-sentence --models " + models + " --corpus " + corpus_path() +
                     " --scores " + sent_scores + " --term i --indicator mu --k 4 --seed 3");
  CHECK(cs.exit_code == 0);
  json srow = json::parse(cs.out);
  CHECK(srow["correlation"].get<double>() >= 0.0);
  CHECK(srow["correlation"].get<double>() <= 1.0);

  // reruns of the score pipeline are byte identical
  std::string rerun = (workdir() / "scores-rerun.csv").string();
  REQUIRE(run("score --models " + models + " --corpus " + corpus_path() +
              " --metric chrf --granularity corpus --beam 3 --out " + rerun).exit_code == 0);
  CHECK(slurp(rerun) == slurp(corpus_scores));
}

TEST_CASE("bleu scoring with forced decoding is exact on self-translation") {
  // forced mode scores the target against itself: BLEU is exactly 100
  std::string out = (workdir() / "scores-bleu.csv").string();
  RunResult r = run("score --models " + model_path() + " --corpus " + corpus_path() +
                    " --metric bleu --granularity corpus --mode forced --out " + out);
  CHECK(r.exit_code == 0);
  dcpl::ScoreTable table = dcpl::load_scores(out);
  CHECK(table.at(0, "*") == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("structured errors and exit codes") {
  RunResult missing = run("verify --model /nonexistent.dcpl --corpus " + corpus_path());
  CHECK(missing.exit_code == 1);
  json err = json::parse(missing.err);
  CHECK(err["error"] == "IoError");

  // tamper with a tensor shape inside the container header
  std::string tampered = (workdir() / "tampered.dcpl").string();
  {
    std::string bytes = slurp(model_path());
    auto pos = bytes.find("[23,16]");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 7, "[23,17]");
    std::ofstream outf(tampered, std::ios::binary | std::ios::trunc);
    outf.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  RunResult shape = run("decompose --model " + tampered + " --corpus " + corpus_path() +
                        " --decomp tok");
  CHECK(shape.exit_code == 1);
  json shape_err = json::parse(shape.err);
  CHECK(shape_err["error"] == "ShapeMismatch");

  RunResult unknown = run("frobnicate --model x");
  CHECK(unknown.exit_code == 1);

  RunResult missing_flag = run("verify --corpus " + corpus_path());
  CHECK(missing_flag.exit_code == 1);
  json parse_err = json::parse(missing_flag.err);
  CHECK(parse_err["error"] == "InvalidArgument");

  RunResult bad_term = run("indicators --model " + model_path() + " --corpus " + corpus_path() +
                           " --term bogus");
  CHECK(bad_term.exit_code == 1);
}

TEST_CASE("outputs go to files atomically") {
  std::string nested = (workdir() / "deep" / "dir" / "report.json").string();
  RunResult r = run("verify --model " + model_path() + " --corpus " + corpus_path() +
                    " --decomp sl --out " + nested);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(nested));
  CHECK(json::parse(slurp(nested))["pass"] == true);
}

}  // TEST_SUITE
