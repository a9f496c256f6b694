#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dkts/qgraph.hpp"

namespace dkts {

struct Interaction {
  std::size_t question = 0;
  int correct = 0;  // 0 or 1

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// One student's attempts in chronological order.
struct InteractionSequence {
  std::string student;
  std::vector<Interaction> steps;
  std::vector<double> timestamps;  // parallel to steps; may be empty

  std::size_t size() const { return steps.size(); }
  friend bool operator==(const InteractionSequence&, const InteractionSequence&) = default;
};

using Dataset = std::vector<InteractionSequence>;

struct ParsedLog {
  Dataset sequences;
  /// Raw question token for each dense id.
  std::vector<std::string> question_ids;
  /// Present when the log carries the optional skills column.
  std::optional<SkillMap> skills;

  std::size_t question_count() const { return question_ids.size(); }
};

/// Rows are `student_id<TAB>timestamp<TAB>question_id<TAB>correct[<TAB>s1,s2]`.
/// Rows are grouped by student and stably sorted by timestamp. Students come
/// out in id order (numeric when every id is an integer). Question ids that
/// are all non-negative integers keep their value as the dense id (Q is the
/// largest + 1); otherwise tokens are ranked lexicographically.
ParsedLog parse_log_text(std::string_view text, const std::string& source = "<log>");
ParsedLog parse_log(const std::filesystem::path& path);

/// Inverse of parse_log_text for a parsed log.
std::string serialize_log(const ParsedLog& log);
/// Log of dense integer ids; timestamps default to the step index.
std::string serialize_log(const Dataset& seqs, const SkillMap* skills = nullptr);
void write_log(const std::filesystem::path& path, const Dataset& seqs, const SkillMap* skills = nullptr);

/// Drops sequences shorter than `min_len` and keeps only the first
/// `max_len` interactions of longer ones.
Dataset filter_sequences(const Dataset& seqs, std::size_t min_len, std::size_t max_len);

struct DataSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Student-level split after a seeded shuffle; partition sizes are rounded
/// fractions of the student count, test takes the remainder. Each partition
/// keeps the input order.
DataSplit split(const Dataset& seqs, double train_fraction, double validation_fraction, std::uint64_t seed);

std::size_t total_interactions(const Dataset& seqs);

struct SimulatorConfig {
  std::size_t students = 500;
  std::size_t questions = 50;
  std::size_t skills = 5;
  /// Seed for the question-to-skill assignment; derived from `seed` when unset.
  std::optional<std::uint64_t> assignment_seed;
  double second_skill_probability = 0.5;
  double guess = 0.2;
  double slip = 0.1;
  /// Initial per-skill mastery is uniform on [initial_mastery_low, initial_mastery_high].
  double initial_mastery_low = 0.0;
  double initial_mastery_high = 0.6;
  double gain = 0.08;
  std::size_t min_length = 20;
  std::size_t max_length = 60;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MasteryRecord {
  std::size_t student;
  std::size_t step;
  int skill;
  double mastery;
};

struct Simulation {
  Dataset sequences;
  SkillMap skills;
  /// Mastery of every skill just before each attempt.
  std::vector<MasteryRecord> mastery;
};

/// guess + (1 - guess - slip) * mastery.
double correct_probability(double guess, double slip, double mean_mastery);

/// Guess/slip learner population. Every question gets a primary skill
/// (each skill used at least once when Q >= skills) and, with
/// `second_skill_probability`, a second distinct one.
Simulation simulate(const SimulatorConfig& cfg);

/// `student_id<TAB>step<TAB>skill_id<TAB>mastery` with a header row.
void write_mastery_trace(const std::filesystem::path& path, const std::vector<MasteryRecord>& records);

}  // namespace dkts
