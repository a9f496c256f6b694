#include "dkts/qgraph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "dkts/errors.hpp"
#include "dkts/textio.hpp"

namespace dkts {

EdgeWeighting parse_weighting(const std::string& name) {
  if (name == "binary") return EdgeWeighting::Binary;
  if (name == "jaccard") return EdgeWeighting::Jaccard;
  throw ValidationError("unknown edge weighting '" + name + "' (expected binary or jaccard)");
}

LaplacianKind parse_laplacian_kind(const std::string& name) {
  if (name == "unnormalized") return LaplacianKind::Unnormalized;
  if (name == "normalized") return LaplacianKind::SymmetricNormalized;
  throw ValidationError("unknown laplacian kind '" + name + "' (expected unnormalized or normalized)");
}

QuestionGraph::QuestionGraph(std::size_t question_count, std::vector<Edge> edges) : q_(question_count) {
  std::map<std::pair<std::size_t, std::size_t>, double> merged;
  for (const Edge& e : edges) {
    if (e.i >= q_ || e.j >= q_) {
      throw IndexError("edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ") outside " +
                       std::to_string(q_) + " questions");
    }
    if (e.i == e.j) throw ValidationError("self-loop on question " + std::to_string(e.i));
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
      throw ValidationError("edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ") has invalid weight");
    }
    merged[{std::min(e.i, e.j), std::max(e.i, e.j)}] += e.weight;
  }

  adjacency_ = num::SparseMatrix(q_, q_);
  adjacency_.set_symmetric(true);
  degree_.assign(q_, 0.0);
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(q_);
  for (const auto& [key, w] : merged) {
    if (w == 0.0) continue;
    edges_.push_back({key.first, key.second, w});
    adjacency_.add_symmetric(key.first, key.second, w);
    adj[key.first].emplace_back(key.second, w);
    adj[key.second].emplace_back(key.first, w);
    degree_[key.first] += w;
    degree_[key.second] += w;
  }
  offsets_.assign(q_ + 1, 0);
  for (std::size_t i = 0; i < q_; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    offsets_[i + 1] = offsets_[i] + adj[i].size();
    for (const auto& [j, w] : adj[i]) {
      nbr_.push_back(j);
      nbr_w_.push_back(w);
    }
  }
}

std::span<const std::size_t> QuestionGraph::neighbours(std::size_t i) const {
  return std::span<const std::size_t>(nbr_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

std::span<const double> QuestionGraph::neighbour_weights(std::size_t i) const {
  return std::span<const double>(nbr_w_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

bool QuestionGraph::has_edge(std::size_t i, std::size_t j) const {
  auto n = neighbours(i);
  return std::binary_search(n.begin(), n.end(), j);
}

QuestionGraph build_graph(const SkillMap& skills, EdgeWeighting weighting) {
  const std::size_t q = skills.size();
  std::map<int, std::vector<std::size_t>> by_skill;
  for (std::size_t i = 0; i < q; ++i) {
    if (skills[i].empty()) throw ValidationError("question " + std::to_string(i) + " has an empty skill set");
    for (int s : skills[i]) by_skill[s].push_back(i);
  }

  std::vector<std::set<std::size_t>> partners(q);
  for (const auto& [skill, members] : by_skill) {
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) partners[members[a]].insert(members[b]);
  }

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j : partners[i]) {
      double w = 1.0;
      if (weighting == EdgeWeighting::Jaccard) {
        std::size_t inter = 0;
        for (int s : skills[i]) inter += skills[j].count(s);
        const std::size_t uni = skills[i].size() + skills[j].size() - inter;
        w = static_cast<double>(inter) / static_cast<double>(uni);
      }
      edges.push_back({i, j, w});
    }
  }
  return QuestionGraph(q, std::move(edges));
}

num::SparseMatrix laplacian(const QuestionGraph& g, LaplacianKind kind) {
  const std::size_t q = g.question_count();
  num::SparseMatrix L(q, q);
  L.set_symmetric(true);
  if (kind == LaplacianKind::Unnormalized) {
    for (std::size_t i = 0; i < q; ++i)
      if (g.degree(i) != 0.0) L.add(i, i, g.degree(i));
    for (const Edge& e : g.edges()) L.add_symmetric(e.i, e.j, -e.weight);
    return L;
  }
  for (std::size_t i = 0; i < q; ++i)
    if (g.degree(i) > 0.0) L.add(i, i, 1.0);
  for (const Edge& e : g.edges()) {
    L.add_symmetric(e.i, e.j, -e.weight / std::sqrt(g.degree(e.i) * g.degree(e.j)));
  }
  return L;
}

namespace {
void check_length(const QuestionGraph& g, std::size_t n) {
  if (n != g.question_count()) {
    throw DimensionError("prediction vector has " + std::to_string(n) + " entries, graph has " +
                         std::to_string(g.question_count()) + " questions");
  }
}
}  // namespace

double quad_form(const QuestionGraph& g, std::span<const double> p) {
  check_length(g, p.size());
  double s = 0.0;
  for (const Edge& e : g.edges()) {
    const double d = p[e.i] - p[e.j];
    s += e.weight * d * d;
  }
  return 0.5 * s;
}

std::vector<double> quad_form_grad(const QuestionGraph& g, std::span<const double> p) {
  check_length(g, p.size());
  std::vector<double> out(p.size(), 0.0);
  for (const Edge& e : g.edges()) {
    const double d = e.weight * (p[e.i] - p[e.j]);
    out[e.i] += d;
    out[e.j] -= d;
  }
  return out;
}

SkillMap read_skill_map(const std::filesystem::path& path) {
  const std::string text = textio::read_file(path);
  std::map<std::size_t, std::set<int>> rows;
  std::size_t line_no = 0;
  for (std::string_view line : textio::split(text, '\n')) {
    ++line_no;
    line = textio::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto cols = textio::split(line, '\t');
    std::size_t q = 0;
    if (cols.size() != 2 || !textio::parse_size(cols[0], q)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected question_id<TAB>skills");
    }
    if (rows.count(q)) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": duplicate question " + std::to_string(q));
    std::set<int> skills;
    for (auto tok : textio::split(cols[1], ',')) {
      std::int64_t s = 0;
      if (!textio::parse_int(tok, s) || s < 0) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad skill id '" + std::string(tok) + "'");
      }
      skills.insert(static_cast<int>(s));
    }
    rows[q] = std::move(skills);
  }
  SkillMap out(rows.empty() ? 0 : rows.rbegin()->first + 1);
  for (auto& [q, s] : rows) out[q] = std::move(s);
  for (std::size_t q = 0; q < out.size(); ++q)
    if (out[q].empty()) throw ValidationError(path.string() + ": question " + std::to_string(q) + " has no skills");
  return out;
}

void write_skill_map(const std::filesystem::path& path, const SkillMap& skills) {
  std::ostringstream out;
  for (std::size_t q = 0; q < skills.size(); ++q) {
    out << q << '\t';
    bool first = true;
    for (int s : skills[q]) {
      if (!first) out << ',';
      out << s;
      first = false;
    }
    out << '\n';
  }
  textio::write_file_atomic(path, out.str());
}

QuestionGraph read_graph(const std::filesystem::path& path, std::size_t question_count) {
  const std::string text = textio::read_file(path);
  std::vector<Edge> edges;
  std::size_t declared = 0;
  std::size_t max_id = 0;
  std::size_t line_no = 0;
  for (std::string_view line : textio::split(text, '\n')) {
    ++line_no;
    line = textio::trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      // Optional "# questions=<Q>" header preserves trailing isolated nodes.
      constexpr std::string_view key = "# questions=";
      if (line.substr(0, key.size()) == key) textio::parse_size(line.substr(key.size()), declared);
      continue;
    }
    const auto cols = textio::split(line, '\t');
    Edge e{};
    if (cols.size() != 3 || !textio::parse_size(cols[0], e.i) || !textio::parse_size(cols[1], e.j) ||
        !textio::parse_double(cols[2], e.weight)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected i<TAB>j<TAB>weight");
    }
    max_id = std::max({max_id, e.i, e.j});
    edges.push_back(e);
  }
  std::size_t q = question_count ? question_count : declared;
  if (q == 0) q = edges.empty() ? 0 : max_id + 1;
  return QuestionGraph(q, std::move(edges));
}

void write_graph(const std::filesystem::path& path, const QuestionGraph& g) {
  std::ostringstream out;
  out << "# questions=" << g.question_count() << '\n';
  for (const Edge& e : g.edges()) out << e.i << '\t' << e.j << '\t' << textio::format_double(e.weight) << '\n';
  textio::write_file_atomic(path, out.str());
}

}  // namespace dkts
