#include "dkts/experiment.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dkts/errors.hpp"
#include "dkts/evaluator.hpp"
#include "dkts/textio.hpp"

namespace dkts {

namespace {

const std::vector<std::string> kTrainKeys = {"alpha",  "learning_rate", "optimizer",   "beta1",     "beta2",
                                             "adam_epsilon", "epochs",  "batch_size", "max_seq_len", "clip_norm",
                                             "train_embedding", "patience"};

double to_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  if (!textio::parse_double(v, d)) throw ValidationError("config key '" + key + "' expects a number, got '" + v + "'");
  return d;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t n = 0;
  if (!textio::parse_size(v, n)) throw ValidationError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return n;
}

std::string weighting_name(EdgeWeighting w) { return w == EdgeWeighting::Binary ? "binary" : "jaccard"; }

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + textio::format_double(v[i]);
  return s;
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> v = {"students", "questions", "skills", "assignment_seed", "second_skill_probability",
                                  "guess", "slip", "initial_mastery_low", "initial_mastery_high", "gain",
                                  "min_length", "max_length", "filter_min_len", "filter_max_len", "train_fraction",
                                  "validation_fraction", "weighting", "dim", "sgns_epochs", "sgns_learning_rate",
                                  "negatives", "window", "noise_exponent", "line_samples_per_edge", "line_order",
                                  "walk_length", "walks_per_node", "p", "q", "hidden", "cell", "dkts_cell"};
    v.insert(v.end(), kTrainKeys.begin(), kTrainKeys.end());
    v.insert(v.end(), {"alpha_grid", "seeds", "seed"});
    return v;
  }();
  return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto& s = simulator;
  if (key == "students") s.students = to_size(key, value);
  else if (key == "questions") s.questions = to_size(key, value);
  else if (key == "skills") s.skills = to_size(key, value);
  else if (key == "assignment_seed") {
    if (value.empty() || value == "auto") s.assignment_seed.reset();
    else s.assignment_seed = to_size(key, value);
  }
  else if (key == "second_skill_probability") s.second_skill_probability = to_double(key, value);
  else if (key == "guess") s.guess = to_double(key, value);
  else if (key == "slip") s.slip = to_double(key, value);
  else if (key == "initial_mastery_low") s.initial_mastery_low = to_double(key, value);
  else if (key == "initial_mastery_high") s.initial_mastery_high = to_double(key, value);
  else if (key == "gain") s.gain = to_double(key, value);
  else if (key == "min_length") s.min_length = to_size(key, value);
  else if (key == "max_length") s.max_length = to_size(key, value);
  else if (key == "filter_min_len") filter_min_len = to_size(key, value);
  else if (key == "filter_max_len") filter_max_len = to_size(key, value);
  else if (key == "train_fraction") train_fraction = to_double(key, value);
  else if (key == "validation_fraction") validation_fraction = to_double(key, value);
  else if (key == "weighting") weighting = parse_weighting(value);
  else if (key == "dim") sgns.dim = to_size(key, value);
  else if (key == "sgns_epochs") sgns.epochs = to_size(key, value);
  else if (key == "sgns_learning_rate") sgns.learning_rate = to_double(key, value);
  else if (key == "negatives") sgns.negatives = to_size(key, value);
  else if (key == "window") sgns.window = to_size(key, value);
  else if (key == "noise_exponent") sgns.noise_exponent = to_double(key, value);
  else if (key == "line_samples_per_edge") sgns.line_samples_per_edge = to_size(key, value);
  else if (key == "line_order") line_order = static_cast<int>(to_size(key, value));
  else if (key == "walk_length") walk.walk_length = to_size(key, value);
  else if (key == "walks_per_node") walk.walks_per_node = to_size(key, value);
  else if (key == "p") walk.return_p = to_double(key, value);
  else if (key == "q") walk.inout_q = to_double(key, value);
  else if (key == "hidden") hidden = to_size(key, value);
  else if (key == "cell") cell = parse_cell(value);
  else if (key == "dkts_cell") dkts_cell = parse_cell(value);
  else if (key == "alpha_grid") {
    alpha_grid.clear();
    for (auto tok : textio::split(value, ',')) {
      if (textio::trim(tok).empty()) continue;
      alpha_grid.push_back(to_double(key, std::string(tok)));
    }
  }
  else if (key == "seeds") seeds = to_size(key, value);
  else if (key == "seed") {
    seed = to_size(key, value);
    simulator.seed = seed;
    train.seed = seed;
  }
  else if (std::find(kTrainKeys.begin(), kTrainKeys.end(), key) != kTrainKeys.end()) train.set(key, value);
  else throw ValidationError("unknown config key '" + key + "'");
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& kv) {
  // `seed` first so explicit per-component keys could never be clobbered by it.
  if (auto it = kv.find("seed"); it != kv.end()) set(it->first, it->second);
  for (const auto& [k, v] : kv)
    if (k != "seed") set(k, v);
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  const auto& s = simulator;
  std::map<std::string, std::string> m{
      {"students", std::to_string(s.students)},
      {"questions", std::to_string(s.questions)},
      {"skills", std::to_string(s.skills)},
      {"assignment_seed", s.assignment_seed ? std::to_string(*s.assignment_seed) : "auto"},
      {"second_skill_probability", textio::format_double(s.second_skill_probability)},
      {"guess", textio::format_double(s.guess)},
      {"slip", textio::format_double(s.slip)},
      {"initial_mastery_low", textio::format_double(s.initial_mastery_low)},
      {"initial_mastery_high", textio::format_double(s.initial_mastery_high)},
      {"gain", textio::format_double(s.gain)},
      {"min_length", std::to_string(s.min_length)},
      {"max_length", std::to_string(s.max_length)},
      {"filter_min_len", std::to_string(filter_min_len)},
      {"filter_max_len", std::to_string(filter_max_len)},
      {"train_fraction", textio::format_double(train_fraction)},
      {"validation_fraction", textio::format_double(validation_fraction)},
      {"weighting", weighting_name(weighting)},
      {"dim", std::to_string(sgns.dim)},
      {"sgns_epochs", std::to_string(sgns.epochs)},
      {"sgns_learning_rate", textio::format_double(sgns.learning_rate)},
      {"negatives", std::to_string(sgns.negatives)},
      {"window", std::to_string(sgns.window)},
      {"noise_exponent", textio::format_double(sgns.noise_exponent)},
      {"line_samples_per_edge", std::to_string(sgns.line_samples_per_edge)},
      {"line_order", std::to_string(line_order)},
      {"walk_length", std::to_string(walk.walk_length)},
      {"walks_per_node", std::to_string(walk.walks_per_node)},
      {"p", textio::format_double(walk.return_p)},
      {"q", textio::format_double(walk.inout_q)},
      {"hidden", std::to_string(hidden)},
      {"cell", cell_name(cell)},
      {"dkts_cell", cell_name(dkts_cell)},
      {"alpha_grid", join_doubles(alpha_grid)},
      {"seeds", std::to_string(seeds)},
      {"seed", std::to_string(seed)},
  };
  const std::string train_kv = train.to_kv();
  for (auto line : textio::split(train_kv, '\n')) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string key(line.substr(0, eq));
    if (key != "seed") m[key] = std::string(line.substr(eq + 1));
  }
  return m;
}

void ExperimentConfig::validate() const {
  simulator.validate();
  sgns.validate();
  walk.validate();
  train.validate();
  if (filter_min_len < 2) throw ValidationError("filter_min_len must be >= 2");
  if (filter_max_len < filter_min_len) throw ValidationError("filter_max_len must be >= filter_min_len");
  if (line_order != 1 && line_order != 2) throw ValidationError("line_order must be 1 or 2");
  if (hidden < 1) throw ValidationError("hidden must be >= 1");
  if (seeds < 1) throw ValidationError("seeds must be >= 1");
  for (double a : alpha_grid)
    if (!(a >= 0.0)) throw ValidationError("alpha_grid values must be >= 0");
}

std::uint64_t repetition_seed(std::uint64_t seed, std::size_t rep) { return seed + rep; }

double MatrixResult::mean(std::size_t row, std::size_t col) const {
  const auto& v = aucs[row][col];
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

EmbeddingTable make_embedding(EmbedMethod method, const QuestionGraph& g, const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (method) {
    case EmbedMethod::Gaussian: return embed_gaussian(g.question_count(), cfg.sgns.dim, seed);
    case EmbedMethod::Line1: return embed_line(g, 1, cfg.sgns, seed);
    case EmbedMethod::Line2: return embed_line(g, 2, cfg.sgns, seed);
    case EmbedMethod::Node2Vec: return embed_node2vec(g, cfg.walk, cfg.sgns, seed);
  }
  throw ValidationError("unknown embedding method");
}

MatrixResult run_matrix(const ExperimentConfig& cfg, const std::optional<MatrixData>& data,
                        const std::function<void(const MatrixProgress&)>& progress) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  MatrixResult result;
  const CellType cells[3] = {CellType::Rnn, CellType::Lstm, CellType::Gru};
  const EmbedMethod line_method = cfg.line_order == 1 ? EmbedMethod::Line1 : EmbedMethod::Line2;
  const EmbedMethod methods[3] = {EmbedMethod::Gaussian, line_method, EmbedMethod::Node2Vec};

  for (std::size_t rep = 0; rep < cfg.seeds; ++rep) {
    const std::uint64_t seed = repetition_seed(cfg.seed, rep);
    Dataset sequences;
    SkillMap skills;
    if (data) {
      sequences = data->sequences;
      skills = data->skills;
    } else {
      SimulatorConfig sc = cfg.simulator;
      sc.seed = seed;
      Simulation sim = simulate(sc);
      sequences = std::move(sim.sequences);
      skills = std::move(sim.skills);
    }
    const Dataset filtered = filter_sequences(sequences, cfg.filter_min_len, cfg.filter_max_len);
    const DataSplit parts = split(filtered, cfg.train_fraction, cfg.validation_fraction, seed);
    const QuestionGraph graph = build_graph(skills, cfg.weighting);

    TrainConfig tc = cfg.train;
    tc.seed = seed;

    for (std::size_t col = 0; col < 3; ++col) {
      const EmbeddingTable table = make_embedding(methods[col], graph, cfg, seed);
      for (std::size_t row = 0; row < 4; ++row) {
        if (!result.applicable(row, col)) continue;
        const bool regularized = row == 3;
        const CellType cell = regularized ? cfg.dkts_cell : cells[row];
        double auc_value = 0.0;
        double alpha = 0.0;
        if (!regularized) {
          TrainConfig base = tc;
          base.alpha = 0.0;
          const FitResult fr = fit(parts.train, parts.validation, init_params(cell, table, cfg.hidden, seed), nullptr, base);
          auc_value = evaluate(fr.params, parts.test).auc;
        } else {
          std::vector<double> grid = cfg.alpha_grid.empty() ? std::vector<double>{cfg.train.alpha} : cfg.alpha_grid;
          double best_val = -1.0;
          for (double a : grid) {
            TrainConfig reg = tc;
            reg.alpha = a;
            const FitResult fr = fit(parts.train, parts.validation, init_params(cell, table, cfg.hidden, seed), &graph, reg);
            const double val = grid.size() > 1 ? evaluate(fr.params, parts.validation).auc : 0.0;
            if (val > best_val) {
              best_val = val;
              alpha = a;
              auc_value = evaluate(fr.params, parts.test).auc;
            }
          }
          result.dkts_alpha[col].push_back(alpha);
        }
        result.aucs[row][col].push_back(auc_value);
        if (progress) progress({rep, row, col, auc_value, alpha});
      }
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::string format_matrix(const MatrixResult& r) {
  std::ostringstream out;
  out << "method";
  for (const char* c : kMatrixColumns) out << '\t' << c;
  out << '\n';
  for (std::size_t row = 0; row < 4; ++row) {
    out << kMatrixRows[row];
    for (std::size_t col = 0; col < 3; ++col) {
      out << '\t';
      if (!r.applicable(row, col)) out << "NA";
      else out << std::fixed << std::setprecision(4) << r.mean(row, col);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace dkts
