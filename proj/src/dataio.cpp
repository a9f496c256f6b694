#include "dkts/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dkts/errors.hpp"
#include "dkts/rng.hpp"
#include "dkts/textio.hpp"

namespace dkts {

namespace {

enum StreamTag : std::uint64_t { kAssignStream = 11, kStudentStream = 12, kSplitStream = 13 };

struct RawRow {
  std::string student;
  double timestamp;
  std::string question;
  int correct;
  std::optional<std::set<int>> skills;
  std::size_t order;
};

bool all_integers(const std::vector<std::string>& tokens) {
  return std::all_of(tokens.begin(), tokens.end(), [](const std::string& t) {
    std::int64_t v = 0;
    return textio::parse_int(t, v) && v >= 0;
  });
}

/// Sorted unique tokens, numerically when all of them are integers.
std::vector<std::string> sorted_unique(std::vector<std::string> tokens) {
  const bool numeric = all_integers(tokens);
  std::sort(tokens.begin(), tokens.end(), [&](const std::string& a, const std::string& b) {
    if (numeric) {
      std::int64_t x = 0, y = 0;
      textio::parse_int(a, x);
      textio::parse_int(b, y);
      return x < y;
    }
    return a < b;
  });
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

void write_skills(std::ostream& out, const std::set<int>& skills) {
  bool first = true;
  for (int s : skills) {
    if (!first) out << ',';
    out << s;
    first = false;
  }
}

}  // namespace

ParsedLog parse_log_text(std::string_view text, const std::string& source) {
  std::vector<RawRow> rows;
  std::size_t line_no = 0;
  bool any_skills = false;
  for (std::string_view line : textio::split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (textio::trim(line).empty() || line.front() == '#') continue;
    const auto cols = textio::split(line, '\t');
    auto fail = [&](const std::string& what) -> void {
      throw ParseError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    if (cols.size() != 4 && cols.size() != 5) fail("expected 4 or 5 tab-separated columns, got " + std::to_string(cols.size()));
    RawRow r{std::string(textio::trim(cols[0])), 0.0, std::string(textio::trim(cols[2])), 0, std::nullopt, rows.size()};
    if (r.student.empty()) fail("empty student id");
    if (r.question.empty()) fail("empty question id");
    if (!textio::parse_double(cols[1], r.timestamp)) fail("bad timestamp '" + std::string(cols[1]) + "'");
    std::int64_t c = 0;
    if (!textio::parse_int(cols[3], c)) fail("bad correctness '" + std::string(cols[3]) + "'");
    if (c != 0 && c != 1) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": correctness must be 0 or 1, got " + std::to_string(c));
    }
    r.correct = static_cast<int>(c);
    if (cols.size() == 5 && !textio::trim(cols[4]).empty()) {
      std::set<int> skills;
      for (auto tok : textio::split(cols[4], ',')) {
        std::int64_t s = 0;
        if (!textio::parse_int(tok, s) || s < 0) fail("bad skill id '" + std::string(tok) + "'");
        skills.insert(static_cast<int>(s));
      }
      r.skills = std::move(skills);
      any_skills = true;
    }
    rows.push_back(std::move(r));
  }

  ParsedLog log;
  std::vector<std::string> qtokens;
  std::vector<std::string> stokens;
  for (const auto& r : rows) {
    qtokens.push_back(r.question);
    stokens.push_back(r.student);
  }
  std::map<std::string, std::size_t> qindex;
  if (all_integers(qtokens)) {
    std::size_t q = 0;
    for (const auto& t : qtokens) {
      std::size_t v = 0;
      textio::parse_size(t, v);
      q = std::max(q, v + 1);
    }
    for (std::size_t i = 0; i < q; ++i) log.question_ids.push_back(std::to_string(i));
    for (const auto& t : qtokens) {
      std::size_t v = 0;
      textio::parse_size(t, v);
      qindex[t] = v;
    }
  } else {
    log.question_ids = sorted_unique(qtokens);
    for (std::size_t i = 0; i < log.question_ids.size(); ++i) qindex[log.question_ids[i]] = i;
  }

  if (any_skills) {
    SkillMap skills(log.question_ids.size());
    for (const auto& r : rows)
      if (r.skills) skills[qindex[r.question]].insert(r.skills->begin(), r.skills->end());
    log.skills = std::move(skills);
  }

  std::map<std::string, std::vector<const RawRow*>> by_student;
  for (const auto& r : rows) by_student[r.student].push_back(&r);
  for (const auto& student : sorted_unique(stokens)) {
    auto& group = by_student[student];
    std::stable_sort(group.begin(), group.end(), [](const RawRow* a, const RawRow* b) { return a->timestamp < b->timestamp; });
    InteractionSequence seq;
    seq.student = student;
    for (const RawRow* r : group) {
      seq.steps.push_back({qindex[r->question], r->correct});
      seq.timestamps.push_back(r->timestamp);
    }
    log.sequences.push_back(std::move(seq));
  }
  return log;
}

ParsedLog parse_log(const std::filesystem::path& path) { return parse_log_text(textio::read_file(path), path.string()); }

std::string serialize_log(const ParsedLog& log) {
  std::ostringstream out;
  for (const auto& seq : log.sequences) {
    for (std::size_t t = 0; t < seq.steps.size(); ++t) {
      const auto& x = seq.steps[t];
      const double ts = t < seq.timestamps.size() ? seq.timestamps[t] : static_cast<double>(t);
      out << seq.student << '\t' << textio::format_double(ts) << '\t' << log.question_ids.at(x.question) << '\t' << x.correct;
      if (log.skills) {
        out << '\t';
        write_skills(out, (*log.skills).at(x.question));
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string serialize_log(const Dataset& seqs, const SkillMap* skills) {
  ParsedLog log;
  log.sequences = seqs;
  std::size_t q = skills ? skills->size() : 0;
  for (const auto& s : seqs)
    for (const auto& x : s.steps) q = std::max(q, x.question + 1);
  for (std::size_t i = 0; i < q; ++i) log.question_ids.push_back(std::to_string(i));
  if (skills) {
    SkillMap padded = *skills;
    padded.resize(q);
    log.skills = std::move(padded);
  }
  return serialize_log(log);
}

void write_log(const std::filesystem::path& path, const Dataset& seqs, const SkillMap* skills) {
  textio::write_file_atomic(path, serialize_log(seqs, skills));
}

Dataset filter_sequences(const Dataset& seqs, std::size_t min_len, std::size_t max_len) {
  Dataset out;
  for (const auto& s : seqs) {
    if (s.size() < min_len) continue;
    InteractionSequence t = s;
    if (t.steps.size() > max_len) t.steps.resize(max_len);
    if (t.timestamps.size() > max_len) t.timestamps.resize(max_len);
    out.push_back(std::move(t));
  }
  return out;
}

DataSplit split(const Dataset& seqs, double train_fraction, double validation_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0) || !(validation_fraction > 0.0 && validation_fraction < 1.0) ||
      !(train_fraction + validation_fraction < 1.0)) {
    throw ValidationError("split fractions must lie in (0,1) with train + validation < 1");
  }
  const std::size_t n = seqs.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw ValidationError("split of " + std::to_string(n) + " students leaves an empty partition");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {kSplitStream}));
  std::shuffle(idx.begin(), idx.end(), rng);
  auto take = [&](std::size_t from, std::size_t to) {
    std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(from), idx.begin() + static_cast<std::ptrdiff_t>(to));
    std::sort(part.begin(), part.end());
    Dataset d;
    for (std::size_t i : part) d.push_back(seqs[i]);
    return d;
  };
  return {take(0, n_train), take(n_train, n_train + n_val), take(n_train + n_val, n)};
}

std::size_t total_interactions(const Dataset& seqs) {
  std::size_t n = 0;
  for (const auto& s : seqs) n += s.size();
  return n;
}

void SimulatorConfig::validate() const {
  if (students < 1) throw ValidationError("simulator needs at least one student");
  if (questions < 1) throw ValidationError("simulator needs at least one question");
  if (skills < 1) throw ValidationError("simulator needs at least one skill");
  if (guess < 0.0 || slip < 0.0) throw ValidationError("guess and slip must be >= 0");
  if (!(guess + slip < 1.0)) throw ValidationError("guess + slip must be < 1");
  if (!(initial_mastery_low >= 0.0 && initial_mastery_low <= initial_mastery_high && initial_mastery_high <= 1.0)) {
    throw ValidationError("initial mastery range must satisfy 0 <= low <= high <= 1");
  }
  if (gain < 0.0) throw ValidationError("mastery gain must be >= 0");
  if (second_skill_probability < 0.0 || second_skill_probability > 1.0) {
    throw ValidationError("second skill probability must lie in [0,1]");
  }
  if (min_length < 1 || min_length > max_length) throw ValidationError("sequence lengths need 1 <= min_length <= max_length");
}

double correct_probability(double guess, double slip, double mean_mastery) {
  return guess + (1.0 - guess - slip) * mean_mastery;
}

Simulation simulate(const SimulatorConfig& cfg) {
  cfg.validate();
  Simulation sim;

  Rng assign(cfg.assignment_seed ? *cfg.assignment_seed : derive_seed(cfg.seed, {kAssignStream}));
  std::vector<int> primary(cfg.questions);
  for (std::size_t q = 0; q < cfg.questions; ++q) primary[q] = static_cast<int>(q % cfg.skills);
  std::shuffle(primary.begin(), primary.end(), assign);
  sim.skills.resize(cfg.questions);
  for (std::size_t q = 0; q < cfg.questions; ++q) {
    sim.skills[q].insert(primary[q]);
    if (cfg.skills > 1 && uniform01(assign) < cfg.second_skill_probability) {
      auto other = static_cast<int>(uniform_index(assign, cfg.skills - 1));
      if (other >= primary[q]) ++other;
      sim.skills[q].insert(other);
    }
  }

  for (std::size_t s = 0; s < cfg.students; ++s) {
    Rng rng(derive_seed(cfg.seed, {kStudentStream, s}));
    std::vector<double> mastery(cfg.skills);
    for (double& m : mastery) m = cfg.initial_mastery_low + (cfg.initial_mastery_high - cfg.initial_mastery_low) * uniform01(rng);
    const std::size_t len = cfg.min_length + uniform_index(rng, cfg.max_length - cfg.min_length + 1);
    InteractionSequence seq;
    seq.student = std::to_string(s);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t q = uniform_index(rng, cfg.questions);
      for (std::size_t k = 0; k < cfg.skills; ++k) sim.mastery.push_back({s, t, static_cast<int>(k), mastery[k]});
      double mean = 0.0;
      for (int k : sim.skills[q]) mean += mastery[static_cast<std::size_t>(k)];
      mean /= static_cast<double>(sim.skills[q].size());
      const int correct = uniform01(rng) < correct_probability(cfg.guess, cfg.slip, mean) ? 1 : 0;
      seq.steps.push_back({q, correct});
      seq.timestamps.push_back(static_cast<double>(t));
      for (int k : sim.skills[q]) {
        double& m = mastery[static_cast<std::size_t>(k)];
        m = std::min(1.0, m + cfg.gain);
      }
    }
    sim.sequences.push_back(std::move(seq));
  }
  return sim;
}

void write_mastery_trace(const std::filesystem::path& path, const std::vector<MasteryRecord>& records) {
  std::ostringstream out;
  out << "student_id\tstep\tskill_id\tmastery\n";
  for (const auto& r : records) out << r.student << '\t' << r.step << '\t' << r.skill << '\t' << textio::format_double(r.mastery) << '\n';
  textio::write_file_atomic(path, out.str());
}

}  // namespace dkts
