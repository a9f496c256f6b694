#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dkts/dataio.hpp"
#include "dkts/errors.hpp"
#include "dkts/evaluator.hpp"
#include "dkts/experiment.hpp"
#include "dkts/gembed.hpp"
#include "dkts/ktmodel.hpp"
#include "dkts/qgraph.hpp"
#include "dkts/textio.hpp"
#include "dkts/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dkts;

namespace {

constexpr const char* kVersion = "0.1.0";

// Options every subcommand shares: `--config` plus one flag per config key.
struct Common {
  std::string config_path;
  std::string manifest_path;
  std::map<std::string, std::string> flags;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key=value config file; flags override it");
  app->add_option("--manifest", c.manifest_path, "where to write the run manifest");
  for (const auto& key : ExperimentConfig::keys()) {
    app->add_option_function<std::string>("--" + key, [&c, key](const std::string& v) { c.flags[key] = v; },
                                          "config key " + key);
  }
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg.apply(parse_kv(textio::read_file(c.config_path), c.config_path));
  cfg.apply(c.flags);
  cfg.validate();
  return cfg;
}

class Manifest {
 public:
  Manifest(std::string subcommand, const ExperimentConfig& cfg)
      : subcommand_(std::move(subcommand)), cfg_(cfg), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& name, const fs::path& p) { inputs_[name] = p.string(); }
  void output(const std::string& name, const fs::path& p) { outputs_[name] = p.string(); }
  void result(const std::string& name, json v) { results_[name] = std::move(v); }

  void write(const fs::path& path) const {
    json j;
    j["subcommand"] = subcommand_;
    j["seed"] = cfg_.seed;
    json config = json::object();
    for (const auto& [k, v] : cfg_.to_map()) config[k] = v;
    j["config"] = config;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!results_.empty()) j["results"] = results_;
    j["versions"] = {{"dkts", kVersion}, {"checkpoint_format", 1}};
    j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    textio::write_file_atomic(path, j.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  ExperimentConfig cfg_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  json results_ = json::object();
};

fs::path manifest_path(const Common& c, const fs::path& fallback) {
  return c.manifest_path.empty() ? fallback : fs::path(c.manifest_path);
}

fs::path sibling(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

QuestionGraph load_graph_source(const std::string& graph, const std::string& skills, const std::string& data,
                                EdgeWeighting weighting) {
  const int given = !graph.empty() + !skills.empty() + !data.empty();
  if (given != 1) throw UsageError("give exactly one of --graph, --skill-map or --data");
  if (!graph.empty()) return read_graph(graph);
  if (!skills.empty()) return build_graph(read_skill_map(skills), weighting);
  ParsedLog log = parse_log(data);
  if (!log.skills) throw ValidationError(data + ": log has no skills column");
  return build_graph(*log.skills, weighting);
}

std::size_t max_question(const Dataset& data) {
  std::size_t q = 0;
  for (const auto& s : data)
    for (const auto& x : s.steps) q = std::max(q, x.question + 1);
  return q;
}

void check_data_fits(const Dataset& data, std::size_t q, const std::string& what) {
  const std::size_t need = max_question(data);
  if (need > q) {
    throw ValidationError("data uses question id " + std::to_string(need - 1) + " but the " + what + " has Q=" +
                          std::to_string(q));
  }
}

Dataset select_partition(const Dataset& all, const std::string& which, const ExperimentConfig& cfg) {
  if (which == "all") return all;
  DataSplit parts = split(all, cfg.train_fraction, cfg.validation_fraction, cfg.seed);
  if (which == "train") return parts.train;
  if (which == "validation") return parts.validation;
  if (which == "test") return parts.test;
  throw UsageError("--split must be all, train, validation or test");
}

int run_simulate(const Common& c, const std::string& out) {
  const ExperimentConfig cfg = resolve(c);
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  const Simulation sim = simulate(cfg.simulator);
  Manifest m("simulate", cfg);
  write_log(dir / "log.tsv", sim.sequences);
  write_skill_map(dir / "skills.tsv", sim.skills);
  write_mastery_trace(dir / "mastery.tsv", sim.mastery);
  m.output("log", dir / "log.tsv");
  m.output("skills", dir / "skills.tsv");
  m.output("mastery", dir / "mastery.tsv");
  m.result("students", sim.sequences.size());
  m.result("interactions", total_interactions(sim.sequences));
  m.write(manifest_path(c, dir / "manifest.json"));
  std::cout << "students=" << sim.sequences.size() << " interactions=" << total_interactions(sim.sequences) << '\n';
  return 0;
}

int run_build_graph(const Common& c, const std::string& skills, const std::string& data, const std::string& out) {
  const ExperimentConfig cfg = resolve(c);
  const QuestionGraph g = load_graph_source("", skills, data, cfg.weighting);
  write_graph(out, g);
  Manifest m("build-graph", cfg);
  if (!skills.empty()) m.input("skills", skills);
  if (!data.empty()) m.input("data", data);
  m.output("graph", out);
  m.result("questions", g.question_count());
  m.result("edges", g.edge_count());
  m.write(manifest_path(c, sibling(out, ".manifest.json")));
  std::cout << "questions=" << g.question_count() << " edges=" << g.edge_count() << '\n';
  return 0;
}

int run_embed(const Common& c, const std::string& graph, const std::string& skills, const std::string& method_name_arg,
              const std::string& out) {
  const ExperimentConfig cfg = resolve(c);
  const EmbedMethod method = parse_method(method_name_arg);
  const QuestionGraph g = load_graph_source(graph, skills, "", cfg.weighting);
  const EmbeddingTable table = make_embedding(method, g, cfg, cfg.seed);
  write_embedding(out, table);
  Manifest m("embed", cfg);
  if (!graph.empty()) m.input("graph", graph);
  if (!skills.empty()) m.input("skills", skills);
  m.output("embedding", out);
  m.result("method", method_name(method));
  m.write(manifest_path(c, sibling(out, ".manifest.json")));
  std::cout << "rows=" << table.rows() << " dim=" << table.dim() << " method=" << method_name(method) << '\n';
  return 0;
}

int run_train(const Common& c, const std::string& data, const std::string& embedding, const std::string& graph_path,
              const std::string& out, std::string log_path) {
  const ExperimentConfig cfg = resolve(c);
  if (graph_path.empty() && cfg.train.alpha > 0.0) {
    throw UsageError("alpha=" + textio::format_double(cfg.train.alpha) +
                     " needs --graph; pass --alpha 0 to train without the relation term");
  }
  EmbeddingTable table = read_embedding(embedding);
  std::optional<QuestionGraph> graph;
  if (!graph_path.empty()) {
    graph = read_graph(graph_path, table.rows());
    if (graph->question_count() != table.rows()) {
      throw ValidationError("graph has Q=" + std::to_string(graph->question_count()) + " but the embedding has " +
                            std::to_string(table.rows()) + " rows");
    }
  }
  const ParsedLog log = parse_log(data);
  check_data_fits(log.sequences, table.rows(), "embedding");
  const Dataset filtered = filter_sequences(log.sequences, cfg.filter_min_len, cfg.filter_max_len);
  const DataSplit parts = split(filtered, cfg.train_fraction, cfg.validation_fraction, cfg.seed);

  if (log_path.empty()) log_path = sibling(out, ".log.tsv").string();
  std::string log_text = "epoch\tloss_prediction\tloss_relation\tloss\tval_auc\tseconds\n";
  const FitResult fr = fit(parts.train, parts.validation, init_params(cfg.cell, std::move(table), cfg.hidden, cfg.seed),
                           graph ? &*graph : nullptr, cfg.train, [&](const EpochRecord& r) {
                             const std::string line = format_epoch(r);
                             std::cerr << line << '\n';
                             log_text += line + "\n";
                           });
  save_checkpoint(out, fr.params, cfg.train.hash());
  textio::write_file_atomic(log_path, log_text);
  const Metrics test = evaluate(fr.params, parts.test, graph ? &*graph : nullptr);

  Manifest m("train", cfg);
  m.input("data", data);
  m.input("embedding", embedding);
  if (graph) m.input("graph", graph_path);
  m.output("checkpoint", out);
  m.output("log", log_path);
  m.result("best_epoch", fr.best_epoch);
  m.result("test_auc", test.auc);
  m.write(manifest_path(c, sibling(out, ".manifest.json")));
  std::cout << format_metrics(test) << '\n';
  return 0;
}

int run_eval(const Common& c, const std::string& checkpoint, const std::string& data, const std::string& graph_path,
             const std::string& dump, const std::string& from_dump, const std::string& partition,
             const std::string& metrics_out) {
  const ExperimentConfig cfg = resolve(c);
  Manifest m("eval", cfg);
  Metrics metrics;
  if (!from_dump.empty()) {
    if (!checkpoint.empty() || !data.empty()) throw UsageError("--from-dump excludes --checkpoint and --data");
    const auto steps = read_step_dump(from_dump);
    metrics = metrics_from_steps(steps);
    m.input("dump", from_dump);
  } else {
    if (checkpoint.empty() || data.empty()) throw UsageError("eval needs --checkpoint and --data (or --from-dump)");
    const Checkpoint ck = load_checkpoint(checkpoint);
    const std::size_t q = ck.params.embedding.rows();
    std::optional<QuestionGraph> graph;
    if (!graph_path.empty()) {
      graph = read_graph(graph_path, q);
      if (graph->question_count() != q) {
        throw ValidationError("graph has Q=" + std::to_string(graph->question_count()) + " but the checkpoint has Q=" +
                              std::to_string(q));
      }
      m.input("graph", graph_path);
    }
    const ParsedLog log = parse_log(data);
    check_data_fits(log.sequences, q, "checkpoint");
    const Dataset filtered = filter_sequences(log.sequences, cfg.filter_min_len, cfg.filter_max_len);
    const Dataset subset = select_partition(filtered, partition, cfg);
    metrics = evaluate(ck.params, subset, graph ? &*graph : nullptr);
    if (!dump.empty()) {
      write_step_dump(dump, score_steps(ck.params, subset));
      m.output("dump", dump);
    }
    m.input("checkpoint", checkpoint);
    m.input("data", data);
  }
  const std::string line = format_metrics(metrics);
  if (!metrics_out.empty()) {
    textio::write_file_atomic(metrics_out, line + "\n");
    m.output("metrics", metrics_out);
  }
  m.result("auc", metrics.auc);
  m.result("steps", metrics.steps);
  if (!c.manifest_path.empty()) m.write(c.manifest_path);
  else if (!metrics_out.empty()) m.write(sibling(metrics_out, ".manifest.json"));
  std::cout << line << '\n';
  return 0;
}

int run_matrix_cmd(const Common& c, const std::string& data, const std::string& skills, const std::string& out,
                   bool quiet) {
  const ExperimentConfig cfg = resolve(c);
  std::optional<MatrixData> input;
  Manifest m("matrix", cfg);
  if (!data.empty()) {
    ParsedLog log = parse_log(data);
    MatrixData md;
    md.sequences = std::move(log.sequences);
    if (!skills.empty()) {
      md.skills = read_skill_map(skills);
      m.input("skills", skills);
    } else if (log.skills) {
      md.skills = std::move(*log.skills);
    } else {
      throw ValidationError(data + ": log has no skills column; pass --skill-map");
    }
    check_data_fits(md.sequences, md.skills.size(), "skill map");
    input = std::move(md);
    m.input("data", data);
  } else if (!skills.empty()) {
    throw UsageError("--skill-map needs --data");
  }
  const MatrixResult r = run_matrix(cfg, input, [&](const MatrixProgress& p) {
    if (quiet) return;
    std::cerr << "seed " << repetition_seed(cfg.seed, p.rep) << '\t' << kMatrixRows[p.row] << '\t'
              << kMatrixColumns[p.col] << "\tauc=" << textio::format_double(p.auc);
    if (p.row == 3) std::cerr << "\talpha=" << textio::format_double(p.alpha);
    std::cerr << '\n';
  });
  const std::string table = format_matrix(r);
  json cells = json::object();
  for (std::size_t row = 0; row < 4; ++row)
    for (std::size_t col = 0; col < 3; ++col)
      if (r.applicable(row, col)) cells[std::string(kMatrixRows[row]) + "/" + kMatrixColumns[col]] = r.aucs[row][col];
  m.result("test_auc_per_seed", cells);
  if (!out.empty()) {
    textio::write_file_atomic(out, table);
    m.output("table", out);
    m.write(manifest_path(c, sibling(out, ".manifest.json")));
  } else if (!c.manifest_path.empty()) {
    m.write(c.manifest_path);
  }
  std::cout << table;
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const IndexError*>(&e)) {
    return 1;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge tracing with question-graph side information"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common c_sim, c_graph, c_embed, c_train, c_eval, c_matrix;

  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic interaction log, skill map and mastery trace");
  add_common(sim, c_sim);
  sim->add_option("--out", sim_out, "output directory")->required();

  std::string g_skills, g_data, g_out;
  auto* bg = app.add_subcommand("build-graph", "Build the question graph from skill annotations");
  add_common(bg, c_graph);
  bg->add_option("--skill-map", g_skills, "skill map file");
  bg->add_option("--data", g_data, "interaction log with a skills column");
  bg->add_option("--out", g_out, "graph file")->required();

  std::string e_graph, e_skills, e_method = "node2vec", e_out;
  auto* em = app.add_subcommand("embed", "Compute question embeddings");
  add_common(em, c_embed);
  em->add_option("--graph", e_graph, "graph file");
  em->add_option("--skill-map", e_skills, "skill map file");
  em->add_option("--method", e_method, "gaussian, line1, line2 or node2vec")->capture_default_str();
  em->add_option("--out", e_out, "embedding file")->required();

  std::string t_data, t_emb, t_graph, t_out, t_log;
  auto* tr = app.add_subcommand("train", "Train a model; with --graph the relation term is active");
  add_common(tr, c_train);
  tr->add_option("--data", t_data, "interaction log")->required();
  tr->add_option("--embedding", t_emb, "embedding file")->required();
  tr->add_option("--graph", t_graph, "graph file");
  tr->add_option("--out", t_out, "checkpoint file")->required();
  tr->add_option("--log", t_log, "training log (default <out>.log.tsv)");

  std::string v_ckpt, v_data, v_graph, v_dump, v_from, v_split = "all", v_metrics;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a log, or recompute metrics from a step dump");
  add_common(ev, c_eval);
  ev->add_option("--checkpoint", v_ckpt, "checkpoint file");
  ev->add_option("--data", v_data, "interaction log");
  ev->add_option("--graph", v_graph, "graph file, adds the mean relation loss");
  ev->add_option("--split", v_split, "all, train, validation or test")->capture_default_str();
  ev->add_option("--dump", v_dump, "write per-step scores here");
  ev->add_option("--from-dump", v_from, "recompute metrics from a step dump");
  ev->add_option("--metrics-out", v_metrics, "also write the metrics line here");

  std::string x_data, x_skills, x_out;
  bool x_quiet = false;
  auto* mx = app.add_subcommand("matrix", "Run the cell x embedding comparison over several seeds");
  add_common(mx, c_matrix);
  mx->add_option("--data", x_data, "interaction log (default: simulate one per seed)");
  mx->add_option("--skill-map", x_skills, "skill map for --data when the log has no skills column");
  mx->add_option("--out", x_out, "table file");
  mx->add_flag("--quiet", x_quiet, "no per-cell progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) return run_simulate(c_sim, sim_out);
    if (*bg) return run_build_graph(c_graph, g_skills, g_data, g_out);
    if (*em) return run_embed(c_embed, e_graph, e_skills, e_method, e_out);
    if (*tr) return run_train(c_train, t_data, t_emb, t_graph, t_out, t_log);
    if (*ev) return run_eval(c_eval, v_ckpt, v_data, v_graph, v_dump, v_from, v_split, v_metrics);
    if (*mx) return run_matrix_cmd(c_matrix, x_data, x_skills, x_out, x_quiet);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 1;
}
