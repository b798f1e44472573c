#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dcpl/common.hpp"
#include "dcpl/corpus.hpp"
#include "dcpl/decomp_sl.hpp"
#include "dcpl/decomp_tok.hpp"
#include "dcpl/errors.hpp"
#include "dcpl/forward.hpp"
#include "dcpl/indicators.hpp"
#include "dcpl/model.hpp"
#include "dcpl/scoring.hpp"
#include "dcpl/stats.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dcpl;

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot open for writing: " + tmp.string());
    out << content;
    if (!out) fail(ErrorKind::IoError, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_model_atomic(const Model& model, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  save_model(model, tmp);
  fs::rename(tmp, path);
}

// Emit a result: to --out when given, else to stdout.
void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
  } else {
    write_atomic(out_path, content);
  }
}

std::vector<std::string> parse_model_list(const std::string& models) {
  std::vector<std::string> paths = split(models, ',');
  if (paths.empty()) fail(ErrorKind::InvalidArgument, "empty model list");
  return paths;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  for (const std::string& field : split(text, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      fail(ErrorKind::InvalidArgument, "not a number: " + field);
    }
  }
  return out;
}

json report_json(const VerificationReport& report) {
  return json{{"max_abs_residual", report.max_abs_residual},
              {"max_rel_residual", report.max_rel_residual},
              {"pass", report.pass}};
}

// Options shared by the pipeline-driving subcommands.
struct PipelineFlags {
  std::string decomp = "sl";
  std::string mode = "forced";
  int beam = 12;
  int max_len = 0;
  double length_norm = 1.0;
  double tol_a = 1e-8;
  double tol_r = 1e-5;
  int threads = 0;
  bool trace_f32 = false;

  PipelineOptions options() const {
    PipelineOptions o;
    o.decomp = decomp_from_string(decomp);
    o.mode = mode_from_string(mode);
    o.beam_size = beam;
    o.max_len = max_len;
    o.length_norm = length_norm;
    o.tol_a = tol_a;
    o.tol_r = tol_r;
    o.threads = resolve_threads(threads);
    o.precision = trace_f32 ? TracePrecision::Float32 : TracePrecision::Float64;
    return o;
  }
};

void add_pipeline_flags(CLI::App* sub, PipelineFlags& flags, bool with_decomp = true) {
  if (with_decomp) {
    sub->add_option("--decomp", flags.decomp, "Decomposition: sl or tok")
        ->check(CLI::IsMember({"sl", "tok"}));
  }
  sub->add_option("--mode", flags.mode, "Decoding mode: forced or beam")
      ->check(CLI::IsMember({"forced", "beam"}));
  sub->add_option("--beam", flags.beam, "Beam size for beam mode");
  sub->add_option("--max-len", flags.max_len, "Beam length cap (0: 2*src_len+4)");
  sub->add_option("--length-norm", flags.length_norm, "Beam length normalization exponent");
  sub->add_option("--tol-a", flags.tol_a, "Absolute reconstruction tolerance");
  sub->add_option("--tol-r", flags.tol_r, "Relative reconstruction tolerance");
  sub->add_option("--threads", flags.threads, "Worker count (0: DCPL_THREADS or hardware)");
}

std::string default_model_id(const std::string& first_path) {
  return fs::path(first_path).stem().string();
}

// ---- series CSV ----

constexpr const char* kSeriesHeader = "model,checkpoint,decomposition,term,indicator,value";

struct SeriesRow {
  std::string model;
  int checkpoint = 0;
  std::string decomp;
  std::string term;
  std::string indicator;
  double value = 0.0;
};

std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::string out = std::string(kSeriesHeader) + "\n";
  for (const SeriesRow& r : rows) {
    out += r.model + "," + std::to_string(r.checkpoint) + "," + r.decomp + "," + r.term + "," +
           r.indicator + "," + format_double(r.value) + "\n";
  }
  return out;
}

struct SeriesGroup {
  std::string model;
  std::string decomp;
  std::string term;
  std::string indicator;
  std::vector<std::pair<int, double>> values;  // sorted by checkpoint
};

// Reads one series CSV; groups rows by (term, indicator); applies filters.
std::vector<SeriesGroup> load_series_file(const std::string& path, const std::string& term_filter,
                                          const std::string& indicator_filter) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open series file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kSeriesHeader) {
    fail(ErrorKind::MalformedRow, path + ": expected header " + kSeriesHeader);
  }
  std::map<std::pair<std::string, std::string>, SeriesGroup> groups;
  std::string model_id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split(line, ',');
    std::string where = path + " line " + std::to_string(line_no);
    if (fields.size() != 6) fail(ErrorKind::MalformedRow, where + ": expected 6 fields");
    SeriesRow row;
    row.model = fields[0];
    row.decomp = fields[2];
    row.term = fields[3];
    row.indicator = fields[4];
    try {
      std::size_t used = 0;
      row.checkpoint = std::stoi(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument(fields[1]);
      row.value = std::stod(fields[5], &used);
      if (used != fields[5].size()) throw std::invalid_argument(fields[5]);
    } catch (const std::exception&) {
      fail(ErrorKind::MalformedRow, where + ": non-numeric checkpoint or value");
    }
    if (model_id.empty()) {
      model_id = row.model;
    } else if (model_id != row.model) {
      fail(ErrorKind::MalformedRow, where + ": multiple model ids in one series file");
    }
    if (!term_filter.empty() && row.term != term_filter) continue;
    if (!indicator_filter.empty() && row.indicator != indicator_filter) continue;
    SeriesGroup& g = groups[{row.term, row.indicator}];
    g.model = row.model;
    g.decomp = row.decomp;
    g.term = row.term;
    g.indicator = row.indicator;
    g.values.emplace_back(row.checkpoint, row.value);
  }
  std::vector<SeriesGroup> out;
  for (auto& [key, group] : groups) {
    std::sort(group.values.begin(), group.values.end());
    for (std::size_t i = 1; i < group.values.size(); ++i) {
      if (group.values[i].first == group.values[i - 1].first) {
        fail(ErrorKind::DuplicateKey, path + ": duplicate checkpoint " +
                                          std::to_string(group.values[i].first) + " for term " +
                                          group.term + ", indicator " + group.indicator);
      }
    }
    out.push_back(std::move(group));
  }
  if (out.empty()) fail(ErrorKind::EmptyCorpus, path + ": no series rows after filtering");
  return out;
}

SeriesGroup load_single_series(const std::string& path, const std::string& term_filter,
                               const std::string& indicator_filter) {
  auto groups = load_series_file(path, term_filter, indicator_filter);
  if (groups.size() != 1) {
    fail(ErrorKind::InvalidArgument,
         path + " holds " + std::to_string(groups.size()) +
             " series; narrow with --term and --indicator");
  }
  return groups.front();
}

IndicatorSeries to_indicator_series(const SeriesGroup& group) {
  IndicatorSeries series;
  series.model_id = group.model;
  series.term = group.term;
  series.indicator = indicator_from_string(group.indicator);
  series.values = group.values;
  return series;
}

// ---- pipeline helpers ----

std::vector<BeamHypothesis> beam_corpus(const Model& model, const Corpus& corpus,
                                        const BeamOptions& bo, int threads) {
  std::vector<BeamHypothesis> out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    out[i] = decode_beam(model, corpus[i].src_ids, bo).best;
  });
  return out;
}

std::vector<int> strip_eos(std::vector<int> tokens) {
  if (!tokens.empty() && tokens.back() == kEosId) tokens.pop_back();
  return tokens;
}

double forced_log_prob(const Model& model, const std::vector<int>& src,
                       const std::vector<int>& tgt) {
  ForcedTrace trace = decode_forced(model, src, tgt);
  Mat scores = logits(model, trace.decoder.output());
  double total = 0.0;
  for (long t = 0; t < scores.rows(); ++t) {
    total += log_softmax(scores.row(t).transpose())[trace.target_ids[t]];
  }
  return total;
}

// ---- subcommand runners ----

struct InitArgs {
  int layers = 2;
  int dim = 16;
  int heads = 4;
  int ffn = 32;
  int vocab = 50;
  std::string activation = "swish";
  double ln_eps = 0.0;
  int max_positions = 128;
  std::uint64_t seed = 0;
  std::string out;
};

void run_init(const InitArgs& a) {
  ModelConfig cfg;
  cfg.num_layers = a.layers;
  cfg.model_dim = a.dim;
  cfg.num_heads = a.heads;
  cfg.ffn_dim = a.ffn;
  cfg.vocab_size = a.vocab;
  cfg.activation = activation_from_string(a.activation);
  cfg.ln_epsilon = a.ln_eps;
  cfg.max_positions = a.max_positions;
  Model model = init_random(cfg, a.seed);
  save_model_atomic(model, a.out);
  json summary{{"path", a.out},
               {"config",
                {{"num_layers", cfg.num_layers},
                 {"model_dim", cfg.model_dim},
                 {"num_heads", cfg.num_heads},
                 {"ffn_dim", cfg.ffn_dim},
                 {"vocab_size", cfg.vocab_size},
                 {"activation", a.activation},
                 {"ln_epsilon", cfg.ln_epsilon},
                 {"max_positions", cfg.max_positions}}},
               {"seed", a.seed}};
  std::cout << summary.dump() << "\n";
}

struct InterpolateArgs {
  std::string model_a;
  std::string model_b;
  int count = 10;
  std::string out_dir;
  std::string stem = "ckpt";
};

void run_interpolate(const InterpolateArgs& a) {
  Model first = load_model(a.model_a);
  Model second = load_model(a.model_b);
  auto blends = interpolate_checkpoints(first, second, a.count);
  int width = static_cast<int>(std::to_string(a.count - 1).size());
  json paths = json::array();
  for (std::size_t k = 0; k < blends.size(); ++k) {
    std::string index = std::to_string(k);
    index.insert(0, width - static_cast<int>(index.size()), '0');
    fs::path path = fs::path(a.out_dir) / (a.stem + index + ".dcpl");
    save_model_atomic(blends[k], path);
    paths.push_back(path.string());
  }
  std::cout << json{{"paths", paths}}.dump() << "\n";
}

struct TranslateArgs {
  std::string model;
  std::string corpus;
  PipelineFlags flags;
  std::string out;
};

void run_translate(const TranslateArgs& a) {
  Model model = load_model(a.model);
  Corpus corpus = load_corpus(a.corpus);
  int threads = resolve_threads(a.flags.threads);
  std::string body;
  if (mode_from_string(a.flags.mode) == DecodeMode::Beam) {
    BeamOptions bo{a.flags.beam, a.flags.max_len, a.flags.length_norm};
    auto best = beam_corpus(model, corpus, bo, threads);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      json row{{"id", corpus[i].id},
               {"tokens", strip_eos(best[i].tokens)},
               {"log_prob", best[i].log_prob},
               {"score", best[i].score},
               {"complete", best[i].complete}};
      body += row.dump() + "\n";
    }
  } else {
    std::vector<double> log_probs(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
      log_probs[i] = forced_log_prob(model, corpus[i].src_ids, corpus[i].tgt_ids);
    });
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      double len = static_cast<double>(corpus[i].tgt_ids.size());
      json row{{"id", corpus[i].id},
               {"tokens", corpus[i].tgt_ids},
               {"log_prob", log_probs[i]},
               {"score", log_probs[i] / std::pow(len, a.flags.length_norm)},
               {"complete", true}};
      body += row.dump() + "\n";
    }
  }
  emit(a.out, body);
}

struct DecomposeArgs {
  std::string model;
  std::string corpus;
  PipelineFlags flags;
  std::string out;
};

json vector_json(const Vec& v) {
  json arr = json::array();
  for (long k = 0; k < v.size(); ++k) arr.push_back(v[k]);
  return arr;
}

void run_decompose(const DecomposeArgs& a) {
  Model model = load_model(a.model);
  Corpus corpus = load_corpus(a.corpus);
  PipelineOptions options = a.flags.options();
  std::string body;
  if (options.decomp == DecompKind::Sublayer) {
    auto decomposed = decompose_corpus(model, corpus, options);
    for (const SentenceTerms& sent : decomposed) {
      for (long pos = 0; pos < sent.reference.rows(); ++pos) {
        for (std::size_t k = 0; k < sent.term_names.size(); ++k) {
          json row{{"sentence_id", sent.id},
                   {"position", pos},
                   {"term", sent.term_names[k]},
                   {"vector", vector_json(sent.terms[k].row(pos).transpose())}};
          body += row.dump() + "\n";
        }
      }
      body += json{{"sentence_id", sent.id}, {"verification", report_json(sent.report)}}.dump() +
              "\n";
    }
  } else {
    std::vector<TokDecomposition> decs(corpus.size());
    std::vector<std::vector<int>> decoded(corpus.size());
    parallel_for(corpus.size(), options.threads, [&](std::size_t i) {
      std::vector<int> target = corpus[i].tgt_ids;
      if (options.mode == DecodeMode::Beam) {
        BeamOptions bo{options.beam_size, options.max_len, options.length_norm};
        target = decode_beam(model, corpus[i].src_ids, bo).best.tokens;
      }
      ForcedTrace forced = decode_forced(model, corpus[i].src_ids, target, options.precision);
      decs[i] = decompose_tok(model, forced.decoder, options.tol_a, options.tol_r,
                              options.strict);
      decoded[i] = std::move(target);
    });
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const TokDecomposition& dec = decs[i];
      for (std::size_t stage = 0; stage < dec.stages.size(); ++stage) {
        const TokStage& st = dec.stages[stage];
        for (long pos = 0; pos < st.s.rows(); ++pos) {
          for (const std::string& name : TokDecomposition::term_names()) {
            json row{{"sentence_id", corpus[i].id},
                     {"sublayer", stage},
                     {"position", pos},
                     {"term", name},
                     {"vector", vector_json(dec.term(stage, name).row(pos).transpose())}};
            body += row.dump() + "\n";
          }
        }
      }
      body += json{{"sentence_id", corpus[i].id}, {"verification", report_json(dec.worst)}}.dump() +
              "\n";
    }
  }
  emit(a.out, body);
}

struct VerifyArgs {
  std::string model;
  std::string corpus;
  std::string decomp;  // "sl", "tok", or "" for both
  PipelineFlags flags;
  std::string out;
};

int run_verify(const VerifyArgs& a) {
  Model model = load_model(a.model);
  Corpus corpus = load_corpus(a.corpus);
  std::vector<std::string> kinds;
  if (a.decomp.empty()) {
    kinds = {"sl", "tok"};
  } else {
    kinds = {a.decomp};
  }
  json results = json::array();
  bool all_pass = true;
  for (const std::string& kind : kinds) {
    PipelineFlags flags = a.flags;
    flags.decomp = kind;
    PipelineOptions options = flags.options();
    auto decomposed = decompose_corpus(model, corpus, options);
    VerificationReport merged;
    std::size_t tokens = 0;
    for (const SentenceTerms& sent : decomposed) {
      merged.merge(sent.report);
      tokens += static_cast<std::size_t>(sent.reference.rows());
    }
    all_pass = all_pass && merged.pass;
    json r = report_json(merged);
    r["decomp"] = kind;
    r["tokens"] = tokens;
    results.push_back(r);
  }
  json report{{"model", a.model},
              {"corpus", a.corpus},
              {"tol_a", a.flags.tol_a},
              {"tol_r", a.flags.tol_r},
              {"results", results},
              {"pass", all_pass}};
  emit(a.out, report.dump() + "\n");
  if (a.out.empty()) std::cout.flush();
  return all_pass ? 0 : 2;
}

struct IndicatorArgs {
  std::string model;       // single checkpoint (indicators)
  std::string models;      // comma list (series)
  std::string corpus;
  std::string model_id;
  std::string term;       // optional filter
  std::string indicator;  // optional filter
  PipelineFlags flags;
  std::string out;
};

std::vector<SeriesRow> indicator_rows(const Model& model, const Corpus& corpus,
                                      const std::string& model_id, int checkpoint,
                                      const IndicatorArgs& a, const PipelineOptions& options) {
  auto decomposed = decompose_corpus(model, corpus, options);
  std::vector<SeriesRow> rows;
  for (const std::string& term : decomp_term_names(options.decomp)) {
    if (!a.term.empty() && term != a.term) continue;
    for (IndicatorKind ind : all_indicators()) {
      if (!a.indicator.empty() && std::string(to_string(ind)) != a.indicator) continue;
      SeriesRow row;
      row.model = model_id;
      row.checkpoint = checkpoint;
      row.decomp = std::string(to_string(options.decomp));
      row.term = term;
      row.indicator = std::string(to_string(ind));
      row.value = corpus_mean_indicator(decomposed, term, ind);
      rows.push_back(row);
    }
  }
  if (rows.empty()) {
    fail(ErrorKind::InvalidArgument, "no (term, indicator) combinations left after filtering");
  }
  return rows;
}

void run_indicators(const IndicatorArgs& a) {
  Model model = load_model(a.model);
  Corpus corpus = load_corpus(a.corpus);
  std::string model_id = a.model_id.empty() ? default_model_id(a.model) : a.model_id;
  auto rows = indicator_rows(model, corpus, model_id, 0, a, a.flags.options());
  emit(a.out, series_csv(rows));
}

void run_series(const IndicatorArgs& a) {
  auto paths = parse_model_list(a.models);
  Corpus corpus = load_corpus(a.corpus);
  std::string model_id = a.model_id.empty() ? default_model_id(paths.front()) : a.model_id;
  PipelineOptions options = a.flags.options();
  // Rows grouped by (term, indicator), checkpoints ascending within a group.
  std::map<std::pair<std::string, std::string>, std::vector<SeriesRow>> grouped;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    Model model = load_model(paths[k]);
    for (SeriesRow& row : indicator_rows(model, corpus, model_id, static_cast<int>(k), a,
                                         options)) {
      grouped[{row.term, row.indicator}].push_back(std::move(row));
    }
  }
  std::vector<SeriesRow> rows;
  for (const std::string& term : decomp_term_names(options.decomp)) {
    for (IndicatorKind ind : all_indicators()) {
      auto it = grouped.find({term, std::string(to_string(ind))});
      if (it == grouped.end()) continue;
      rows.insert(rows.end(), it->second.begin(), it->second.end());
    }
  }
  emit(a.out, series_csv(rows));
}

struct DtwArgs {
  std::vector<std::string> series_paths;
  std::string term;
  std::string indicator;
  std::string heatmap;
  std::string out;
};

void run_dtw(const DtwArgs& a) {
  if (a.heatmap.empty()) {
    if (a.series_paths.size() != 2) {
      fail(ErrorKind::InvalidArgument, "pairwise mode needs exactly two --series files");
    }
    SeriesGroup ga = load_single_series(a.series_paths[0], a.term, a.indicator);
    SeriesGroup gb = load_single_series(a.series_paths[1], a.term, a.indicator);
    if (ga.term != gb.term || ga.indicator != gb.indicator) {
      fail(ErrorKind::InvalidArgument, "series files hold different (term, indicator) pairs");
    }
    std::vector<double> va, vb;
    for (auto& [c, v] : ga.values) va.push_back(v);
    for (auto& [c, v] : gb.values) vb.push_back(v);
    DtwResult r = dtw_distance(va, vb);
    json result{{"series_a", ga.model},   {"series_b", gb.model},
                {"term", ga.term},        {"indicator", ga.indicator},
                {"distance", r.distance}, {"path_length", r.path_length}};
    emit(a.out, result.dump() + "\n");
    return;
  }

  if (a.series_paths.size() < 3) {
    fail(ErrorKind::InvalidArgument,
         "heatmap mode needs at least three --series files to normalize pair distances");
  }
  std::vector<std::vector<SeriesGroup>> files;
  for (const std::string& path : a.series_paths) {
    files.push_back(load_series_file(path, a.term, a.indicator));
  }
  // (term, indicator) pairs present in every file, in sorted order.
  std::map<std::pair<std::string, std::string>, int> present;
  for (const auto& groups : files) {
    for (const auto& g : groups) ++present[{g.term, g.indicator}];
  }
  std::string csv = "term,indicator,model_row,model_col,z_distance\n";
  bool any = false;
  for (const auto& [key, count] : present) {
    if (count != static_cast<int>(files.size())) continue;
    any = true;
    std::vector<const SeriesGroup*> groups;
    for (const auto& fgroups : files) {
      for (const auto& g : fgroups) {
        if (g.term == key.first && g.indicator == key.second) groups.push_back(&g);
      }
    }
    std::vector<double> distances;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        std::vector<double> va, vb;
        for (auto& [c, v] : groups[i]->values) va.push_back(v);
        for (auto& [c, v] : groups[j]->values) vb.push_back(v);
        distances.push_back(dtw_distance(va, vb).distance);
        pairs.emplace_back(i, j);
      }
    }
    std::vector<double> z = z_normalize(distances);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      csv += key.first + "," + key.second + "," + groups[pairs[p].first]->model + "," +
             groups[pairs[p].second]->model + "," + format_double(z[p]) + "\n";
    }
  }
  if (!any) fail(ErrorKind::InvalidArgument, "no (term, indicator) pair shared by all files");
  write_atomic(a.heatmap, csv);
}

struct PermtestArgs {
  std::string group_a;
  std::string group_b;
  std::string mode = "exact";
  std::uint64_t seed = 0;
  std::uint64_t draws = 100000;
  std::uint64_t cap = kDefaultExactCap;
  std::string out;
};

void run_permtest(const PermtestArgs& a) {
  PitmanMode mode;
  if (a.mode == "exact") {
    mode = PitmanMode::Exact;
  } else if (a.mode == "mc") {
    mode = PitmanMode::MonteCarlo;
  } else {
    fail(ErrorKind::InvalidArgument, "permutation mode must be exact or mc");
  }
  auto result =
      pitman_test(parse_doubles(a.group_a), parse_doubles(a.group_b), mode, a.seed, a.draws,
                  a.cap);
  json r{{"p_value", result.p_value},
         {"observed", result.observed},
         {"mode", a.mode},
         {"draws", result.draws}};
  emit(a.out, r.dump() + "\n");
}

struct CorrCorpusArgs {
  std::string series;
  std::string scores;
  std::string term;
  std::string indicator;
  int num_pairs = 0;  // 0: all available
  std::uint64_t seed = 0;
  bool unpaired = false;
  std::string out;
};

void run_correlate_corpus(const CorrCorpusArgs& a) {
  SeriesGroup group = load_single_series(a.series, a.term, a.indicator);
  IndicatorSeries series = to_indicator_series(group);
  ScoreTable scores = load_scores(a.scores);
  std::size_t m = series.values.size();
  std::size_t available = a.unpaired ? m * (m - 1) / 2 : (m > 0 ? m - 1 : 0);
  int num_pairs = a.num_pairs > 0 ? a.num_pairs : static_cast<int>(available);
  double rho = corpus_correlation_protocol(series, scores, a.seed, num_pairs, !a.unpaired);
  json r{{"correlation", rho},
         {"num_pairs", num_pairs},
         {"term", series.term},
         {"indicator", std::string(to_string(series.indicator))},
         {"pairing", a.unpaired ? "random" : "consecutive"}};
  emit(a.out, r.dump() + "\n");
}

struct CorrSentenceArgs {
  std::string models;
  std::string corpus;
  std::string scores;
  std::string term;
  std::string indicator = "mu";
  int k = 3000;
  std::uint64_t seed = 0;
  PipelineFlags flags;
  std::string out;
};

void run_correlate_sentence(const CorrSentenceArgs& a) {
  if (a.term.empty()) fail(ErrorKind::InvalidArgument, "--term is required");
  auto paths = parse_model_list(a.models);
  Corpus corpus = load_corpus(a.corpus);
  PipelineOptions options = a.flags.options();
  IndicatorKind indicator = indicator_from_string(a.indicator);

  ScoreTable indicator_table;
  indicator_table.granularity = Granularity::Sentence;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    Model model = load_model(paths[k]);
    auto decomposed = decompose_corpus(model, corpus, options);
    for (const SentenceTerms& sent : decomposed) {
      indicator_table.entries[{static_cast<int>(k), sent.id}] =
          sentence_mean_indicator(sent, a.term, indicator);
    }
  }
  ScoreTable scores = load_scores(a.scores);
  double rho = sentence_correlation_protocol(indicator_table, scores, a.k, a.seed);
  json r{{"correlation", rho},
         {"k", a.k},
         {"term", a.term},
         {"indicator", a.indicator},
         {"checkpoints", paths.size()}};
  emit(a.out, r.dump() + "\n");
}

struct ScoreArgs {
  std::string models;
  std::string corpus;
  std::string metric = "chrf";
  std::string granularity = "sentence";
  bool smooth = false;
  PipelineFlags flags;
  std::string out;
};

void run_score(const ScoreArgs& a) {
  auto paths = parse_model_list(a.models);
  Corpus corpus = load_corpus(a.corpus);
  if (a.metric != "bleu" && a.metric != "chrf") {
    fail(ErrorKind::InvalidArgument, "metric must be bleu or chrf");
  }
  Granularity granularity = granularity_from_string(a.granularity);
  DecodeMode mode = mode_from_string(a.flags.mode);
  int threads = resolve_threads(a.flags.threads);
  BeamOptions bo{a.flags.beam, a.flags.max_len, a.flags.length_norm};

  ScoreTable table;
  table.granularity = granularity;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    Model model = load_model(paths[k]);
    std::vector<std::vector<int>> hyps;
    std::vector<std::vector<int>> refs;
    if (mode == DecodeMode::Beam) {
      auto best = beam_corpus(model, corpus, bo, threads);
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        hyps.push_back(strip_eos(best[i].tokens));
        refs.push_back(corpus[i].tgt_ids);
      }
    } else {
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        hyps.push_back(corpus[i].tgt_ids);
        refs.push_back(corpus[i].tgt_ids);
      }
    }
    int ckpt = static_cast<int>(k);
    if (granularity == Granularity::Corpus) {
      double value;
      if (a.metric == "bleu") {
        value = bleu_corpus(hyps, refs, a.smooth);
      } else {
        KahanSum sum;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
          sum.add(hyps[i].empty() ? 0.0
                                  : chrf_sentence(render_tokens(hyps[i]),
                                                  render_tokens(refs[i])));
        }
        value = sum.value() / static_cast<double>(corpus.size());
      }
      table.entries[{ckpt, "*"}] = value;
    } else {
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        double value;
        if (hyps[i].empty()) {
          value = 0.0;
        } else if (a.metric == "bleu") {
          value = bleu_corpus({hyps[i]}, {refs[i]}, a.smooth);
        } else {
          value = chrf_sentence(render_tokens(hyps[i]), render_tokens(refs[i]));
        }
        table.entries[{ckpt, corpus[i].id}] = value;
      }
    }
  }
  std::ostringstream buffer;
  buffer << "checkpoint,sentence_id,score\n";
  for (const auto& [key, value] : table.entries) {
    buffer << key.first << "," << key.second << "," << format_double(value) << "\n";
  }
  emit(a.out, buffer.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear decompositions of decoder embeddings: exact term splits, geometry "
               "indicators, and checkpoint statistics"};
  app.require_subcommand(1);

  InitArgs init_args;
  auto* init = app.add_subcommand("init-model", "Create a randomly initialized model file");
  init->add_option("--layers", init_args.layers, "Encoder/decoder layer count");
  init->add_option("--dim", init_args.dim, "Model width d");
  init->add_option("--heads", init_args.heads, "Attention heads");
  init->add_option("--ffn", init_args.ffn, "Feed-forward width");
  init->add_option("--vocab", init_args.vocab, "Vocabulary size (id 0 is eos)");
  init->add_option("--activation", init_args.activation, "relu, gelu, or swish")
      ->check(CLI::IsMember({"relu", "gelu", "swish"}));
  init->add_option("--ln-eps", init_args.ln_eps, "Normalization epsilon");
  init->add_option("--max-positions", init_args.max_positions, "Sequence length cap");
  init->add_option("--seed", init_args.seed, "Weight init seed");
  init->add_option("--out", init_args.out, "Output model path")->required();
  init->callback([&] { run_init(init_args); });

  InterpolateArgs interp_args;
  auto* interp =
      app.add_subcommand("interpolate", "Write linear blends between two model files");
  interp->add_option("--model-a", interp_args.model_a, "First endpoint")->required();
  interp->add_option("--model-b", interp_args.model_b, "Second endpoint")->required();
  interp->add_option("--count", interp_args.count, "Number of checkpoints (>= 2)");
  interp->add_option("--out-dir", interp_args.out_dir, "Output directory")->required();
  interp->add_option("--stem", interp_args.stem, "Checkpoint file stem");
  interp->callback([&] { run_interpolate(interp_args); });

  TranslateArgs translate_args;
  auto* translate = app.add_subcommand("translate", "Decode a corpus (beam) or score targets "
                                                    "(forced)");
  translate->add_option("--model", translate_args.model, "Model file")->required();
  translate->add_option("--corpus", translate_args.corpus, "Corpus JSONL")->required();
  translate_args.flags.mode = "beam";
  add_pipeline_flags(translate, translate_args.flags, false);
  translate->add_option("--out", translate_args.out, "Output JSONL (default stdout)");
  translate->callback([&] { run_translate(translate_args); });

  DecomposeArgs decompose_args;
  auto* decompose = app.add_subcommand("decompose", "Dump per-token decomposition vectors");
  decompose->add_option("--model", decompose_args.model, "Model file")->required();
  decompose->add_option("--corpus", decompose_args.corpus, "Corpus JSONL")->required();
  add_pipeline_flags(decompose, decompose_args.flags);
  decompose->add_option("--out", decompose_args.out, "Output JSONL (default stdout)");
  decompose->callback([&] { run_decompose(decompose_args); });

  VerifyArgs verify_args;
  int verify_exit = 0;
  auto* verify =
      app.add_subcommand("verify", "Check exact reconstruction over a corpus");
  verify->add_option("--model", verify_args.model, "Model file")->required();
  verify->add_option("--corpus", verify_args.corpus, "Corpus JSONL")->required();
  verify->add_option("--decomp", verify_args.decomp, "sl or tok (default: both)")
      ->check(CLI::IsMember({"sl", "tok"}));
  add_pipeline_flags(verify, verify_args.flags, false);
  verify->add_flag("--trace-f32", verify_args.flags.trace_f32,
                   "Truncate traced values to 32-bit floats (diagnostic)");
  verify->add_option("--out", verify_args.out, "Report path (default stdout)");
  verify->callback([&] { verify_exit = run_verify(verify_args); });

  IndicatorArgs indicator_args;
  auto* indicators =
      app.add_subcommand("indicators", "Corpus-mean indicators for one checkpoint");
  indicators->add_option("--model", indicator_args.model, "Model file")->required();
  indicators->add_option("--corpus", indicator_args.corpus, "Corpus JSONL")->required();
  indicators->add_option("--model-id", indicator_args.model_id, "Model id column value");
  indicators->add_option("--term", indicator_args.term, "Only this term");
  indicators->add_option("--indicator", indicator_args.indicator, "Only this indicator")
      ->check(CLI::IsMember({"nr", "cos", "mu"}));
  add_pipeline_flags(indicators, indicator_args.flags);
  indicators->add_option("--out", indicator_args.out, "Output CSV (default stdout)");
  indicators->callback([&] { run_indicators(indicator_args); });

  IndicatorArgs series_args;
  auto* series = app.add_subcommand("series", "Indicator series across ordered checkpoints");
  series->add_option("--models", series_args.models, "Comma-separated checkpoint files")
      ->required();
  series->add_option("--corpus", series_args.corpus, "Corpus JSONL")->required();
  series->add_option("--model-id", series_args.model_id, "Model id column value");
  series->add_option("--term", series_args.term, "Only this term");
  series->add_option("--indicator", series_args.indicator, "Only this indicator")
      ->check(CLI::IsMember({"nr", "cos", "mu"}));
  add_pipeline_flags(series, series_args.flags);
  series->add_option("--out", series_args.out, "Output CSV (default stdout)");
  series->callback([&] { run_series(series_args); });

  DtwArgs dtw_args;
  auto* dtw = app.add_subcommand("dtw", "Dynamic time warping between indicator series");
  dtw->add_option("--series", dtw_args.series_paths, "Series CSV (repeat per file)")
      ->required();
  dtw->add_option("--term", dtw_args.term, "Only this term");
  dtw->add_option("--indicator", dtw_args.indicator, "Only this indicator")
      ->check(CLI::IsMember({"nr", "cos", "mu"}));
  dtw->add_option("--heatmap", dtw_args.heatmap,
                  "Write a z-normalized pairwise distance CSV to this path");
  dtw->add_option("--out", dtw_args.out, "Pairwise result JSON (default stdout)");
  dtw->callback([&] { run_dtw(dtw_args); });

  PermtestArgs permtest_args;
  auto* permtest = app.add_subcommand("permtest", "Pitman permutation test on two groups");
  permtest->add_option("--group-a", permtest_args.group_a, "Comma-separated values")->required();
  permtest->add_option("--group-b", permtest_args.group_b, "Comma-separated values")->required();
  permtest->add_option("--mode", permtest_args.mode, "exact or mc")
      ->check(CLI::IsMember({"exact", "mc"}));
  permtest->add_option("--seed", permtest_args.seed, "Monte Carlo seed");
  permtest->add_option("--draws", permtest_args.draws, "Monte Carlo draws");
  permtest->add_option("--cap", permtest_args.cap, "Exact enumeration cap");
  permtest->add_option("--out", permtest_args.out, "Result JSON (default stdout)");
  permtest->callback([&] { run_permtest(permtest_args); });

  CorrCorpusArgs corr_corpus_args;
  auto* corr_corpus = app.add_subcommand(
      "correlate-corpus", "Correlate indicator deltas with corpus score deltas");
  corr_corpus->add_option("--series", corr_corpus_args.series, "Indicator series CSV")
      ->required();
  corr_corpus->add_option("--scores", corr_corpus_args.scores, "Corpus-level score CSV")
      ->required();
  corr_corpus->add_option("--term", corr_corpus_args.term, "Only this term");
  corr_corpus->add_option("--indicator", corr_corpus_args.indicator, "Only this indicator")
      ->check(CLI::IsMember({"nr", "cos", "mu"}));
  corr_corpus->add_option("--num-pairs", corr_corpus_args.num_pairs,
                          "Checkpoint pairs to sample (0: all)");
  corr_corpus->add_option("--seed", corr_corpus_args.seed, "Sampling seed");
  corr_corpus->add_flag("--unpaired", corr_corpus_args.unpaired,
                        "Sample arbitrary checkpoint pairs instead of consecutive ones");
  corr_corpus->add_option("--out", corr_corpus_args.out, "Result JSON (default stdout)");
  corr_corpus->callback([&] { run_correlate_corpus(corr_corpus_args); });

  CorrSentenceArgs corr_sentence_args;
  auto* corr_sentence = app.add_subcommand(
      "correlate-sentence", "Correlate per-sentence indicator deltas with score deltas");
  corr_sentence->add_option("--models", corr_sentence_args.models, "Checkpoint files")
      ->required();
  corr_sentence->add_option("--corpus", corr_sentence_args.corpus, "Corpus JSONL")->required();
  corr_sentence->add_option("--scores", corr_sentence_args.scores, "Sentence-level score CSV")
      ->required();
  corr_sentence->add_option("--term", corr_sentence_args.term, "Decomposition term")->required();
  corr_sentence->add_option("--indicator", corr_sentence_args.indicator, "Indicator")
      ->check(CLI::IsMember({"nr", "cos", "mu"}));
  corr_sentence->add_option("--k", corr_sentence_args.k, "Sentences to sample");
  corr_sentence->add_option("--seed", corr_sentence_args.seed, "Sampling seed");
  add_pipeline_flags(corr_sentence, corr_sentence_args.flags);
  corr_sentence->add_option("--out", corr_sentence_args.out, "Result JSON (default stdout)");
  corr_sentence->callback([&] { run_correlate_sentence(corr_sentence_args); });

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Beam-decode checkpoints and write a score table");
  score->add_option("--models", score_args.models, "Checkpoint files")->required();
  score->add_option("--corpus", score_args.corpus, "Corpus JSONL")->required();
  score->add_option("--metric", score_args.metric, "bleu or chrf")
      ->check(CLI::IsMember({"bleu", "chrf"}));
  score->add_option("--granularity", score_args.granularity, "corpus or sentence")
      ->check(CLI::IsMember({"corpus", "sentence"}));
  score->add_flag("--smooth", score_args.smooth, "Add-one smoothing for BLEU precisions");
  score_args.flags.mode = "beam";
  add_pipeline_flags(score, score_args.flags, false);
  score->add_option("--out", score_args.out, "Output score CSV (default stdout)");
  score->callback([&] { run_score(score_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // help/version
    std::cerr << json{{"error", "InvalidArgument"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const Error& e) {
    json err{{"error", e.name()}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return is_numerical(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    json err{{"error", "Internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return verify_exit;
}
