#include "dkts/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>

#include "dkts/errors.hpp"
#include "dkts/textio.hpp"
#include "dkts/trainer.hpp"

namespace dkts {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1..j share their mean.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw ValidationError("auc: labels must be 0 or 1");
      if (y == 1) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw ValidationError("auc is undefined without both positive and negative labels");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

std::vector<ScoredStep> score_steps(const ModelParams& params, const Dataset& data) {
  std::vector<ScoredStep> out;
  for (const auto& seq : data) {
    if (seq.size() < 2) throw ValidationError("student " + seq.student + " has fewer than 2 interactions");
    const auto preds = forward_sequence(seq, params);
    for (std::size_t t = 0; t < preds.size(); ++t) {
      const Interaction& next = seq.steps[t + 1];
      out.push_back({seq.student, t + 1, next.question, preds[t][next.question], next.correct});
    }
  }
  // Merge order: student id (numeric when every id is an integer), then step.
  const bool numeric = std::all_of(out.begin(), out.end(), [](const ScoredStep& s) {
    std::int64_t v = 0;
    return textio::parse_int(s.student, v);
  });
  std::stable_sort(out.begin(), out.end(), [numeric](const ScoredStep& a, const ScoredStep& b) {
    if (a.student == b.student) return a.step < b.step;
    if (numeric) {
      std::int64_t x = 0, y = 0;
      textio::parse_int(a.student, x);
      textio::parse_int(b.student, y);
      return x < y;
    }
    return a.student < b.student;
  });
  return out;
}

Metrics metrics_from_steps(std::span<const ScoredStep> steps) {
  if (steps.empty()) throw ValidationError("no scored steps to evaluate");
  std::vector<double> scores;
  std::vector<int> labels;
  Metrics m;
  std::size_t hits = 0;
  double loss = 0.0;
  for (const auto& s : steps) {
    scores.push_back(s.score);
    labels.push_back(s.label);
    hits += (s.score >= 0.5 ? 1 : 0) == s.label ? 1 : 0;
    const double p = std::clamp(s.score, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    loss += s.label ? -std::log(p) : -std::log(1.0 - p);
  }
  m.steps = steps.size();
  m.auc = auc(scores, labels);
  m.accuracy = static_cast<double>(hits) / static_cast<double>(m.steps);
  m.mean_loss = loss / static_cast<double>(m.steps);
  return m;
}

Metrics evaluate(const ModelParams& params, const Dataset& data, const QuestionGraph* graph) {
  if (data.empty()) throw ValidationError("evaluation set is empty");
  Metrics m = metrics_from_steps(score_steps(params, data));
  if (graph) {
    double rel = 0.0;
    for (const auto& seq : data)
      for (const auto& p : forward_sequence(seq, params)) rel += quad_form(*graph, p);
    m.mean_relation = rel / static_cast<double>(m.steps);
  }
  return m;
}

std::string format_metrics(const Metrics& m) {
  std::ostringstream out;
  out << "auc=" << textio::format_double(m.auc) << " accuracy=" << textio::format_double(m.accuracy)
      << " loss=" << textio::format_double(m.mean_loss) << " steps=" << m.steps;
  return out.str();
}

void write_step_dump(const std::filesystem::path& path, std::span<const ScoredStep> steps) {
  std::ostringstream out;
  out << "student_id\tstep\tquestion_id\tscore\tlabel\n";
  for (const auto& s : steps) {
    out << s.student << '\t' << s.step << '\t' << s.question << '\t' << textio::format_double(s.score) << '\t' << s.label << '\n';
  }
  textio::write_file_atomic(path, out.str());
}

std::vector<ScoredStep> read_step_dump(const std::filesystem::path& path) {
  const std::string text = textio::read_file(path);
  std::vector<ScoredStep> out;
  std::size_t ln = 0;
  for (auto line : textio::split(text, '\n')) {
    ++ln;
    line = textio::trim(line);
    if (line.empty() || (ln == 1 && line.substr(0, 10) == "student_id")) continue;
    const auto cols = textio::split(line, '\t');
    ScoredStep s;
    std::int64_t label = 0;
    if (cols.size() != 5 || !textio::parse_size(cols[1], s.step) || !textio::parse_size(cols[2], s.question) ||
        !textio::parse_double(cols[3], s.score) || !textio::parse_int(cols[4], label) || (label != 0 && label != 1)) {
      throw ParseError(path.string() + ":" + std::to_string(ln) + ": expected student_id, step, question_id, score, label");
    }
    s.student = std::string(cols[0]);
    s.label = static_cast<int>(label);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dkts
