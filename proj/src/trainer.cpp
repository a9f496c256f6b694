#include "dkts/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dkts/errors.hpp"
#include "dkts/evaluator.hpp"
#include "dkts/rng.hpp"
#include "dkts/textio.hpp"

namespace dkts {

namespace {

enum StreamTag : std::uint64_t { kShuffleStream = 31 };

double parse_number(const std::string& key, const std::string& value) {
  double v = 0.0;
  if (!textio::parse_double(value, v)) throw ValidationError("config key '" + key + "' expects a number, got '" + value + "'");
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  if (!textio::parse_size(value, v)) throw ValidationError("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
  return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ValidationError("config key '" + key + "' expects true/false, got '" + value + "'");
}

/// Adaptive-moment or plain SGD update over the trainable tensors.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const std::vector<std::pair<std::string, num::Tensor*>>& params) : cfg_(cfg) {
    for (const auto& [name, t] : params) {
      m_.emplace_back(t->shape());
      v_.emplace_back(t->shape());
    }
  }

  void step(const std::vector<std::pair<std::string, num::Tensor*>>& params, const std::vector<num::Tensor>& grads) {
    ++t_;
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = *params[k].second;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grads[k][i];
      }
      return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& w = *params[k].second;
      auto& m = m_[k];
      auto& v = v_[k];
      const auto& g = grads[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_epsilon);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<num::Tensor> m_;
  std::vector<num::Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ValidationError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be >= 0");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (max_seq_len < 1) throw ValidationError("max_seq_len must be >= 1");
  if (clip_norm < 0.0) throw ValidationError("clip_norm must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("adam decays must lie in [0,1)");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "alpha") alpha = parse_number(key, value);
  else if (key == "learning_rate") learning_rate = parse_number(key, value);
  else if (key == "optimizer") optimizer = parse_optimizer(value);
  else if (key == "beta1") beta1 = parse_number(key, value);
  else if (key == "beta2") beta2 = parse_number(key, value);
  else if (key == "adam_epsilon") adam_epsilon = parse_number(key, value);
  else if (key == "epochs") epochs = parse_count(key, value);
  else if (key == "batch_size") batch_size = parse_count(key, value);
  else if (key == "max_seq_len") max_seq_len = parse_count(key, value);
  else if (key == "clip_norm") clip_norm = parse_number(key, value);
  else if (key == "seed") seed = parse_count(key, value);
  else if (key == "train_embedding") train_embedding = parse_flag(key, value);
  else if (key == "patience") patience = parse_count(key, value);
  else throw ValidationError("unknown training config key '" + key + "'");
}

std::string TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv{
      {"alpha", textio::format_double(alpha)},
      {"learning_rate", textio::format_double(learning_rate)},
      {"optimizer", optimizer_name(optimizer)},
      {"beta1", textio::format_double(beta1)},
      {"beta2", textio::format_double(beta2)},
      {"adam_epsilon", textio::format_double(adam_epsilon)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"max_seq_len", std::to_string(max_seq_len)},
      {"clip_norm", textio::format_double(clip_norm)},
      {"seed", std::to_string(seed)},
      {"train_embedding", train_embedding ? "true" : "false"},
      {"patience", std::to_string(patience)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string TrainConfig::hash() const {
  std::ostringstream out;
  out << std::hex << textio::fnv1a(to_kv());
  return out.str();
}

std::map<std::string, std::string> parse_kv(std::string_view text, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::size_t ln = 0;
  for (auto line : textio::split(text, '\n')) {
    ++ln;
    line = textio::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source + ":" + std::to_string(ln) + ": expected key=value");
    const auto key = textio::trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source + ":" + std::to_string(ln) + ": empty key");
    kv[std::string(key)] = std::string(textio::trim(line.substr(eq + 1)));
  }
  return kv;
}

double loss_prediction(std::span<const double> p, const Interaction& next) {
  if (next.question >= p.size()) {
    throw IndexError("question " + std::to_string(next.question) + " outside prediction vector of " + std::to_string(p.size()));
  }
  const double sel = std::clamp(p[next.question], kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return next.correct ? -std::log(sel) : -std::log(1.0 - sel);
}

double loss_relation(std::span<const double> p, const QuestionGraph& g) { return quad_form(g, p); }

LossBreakdown sequence_loss(const InteractionSequence& seq, const ModelParams& params, const QuestionGraph* g, double alpha) {
  const auto preds = forward_sequence(seq, params);
  LossBreakdown out;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    out.prediction += loss_prediction(preds[t], seq.steps[t + 1]);
    if (g) out.relation += loss_relation(preds[t], *g);
  }
  const double n = static_cast<double>(preds.size());
  out.prediction /= n;
  out.relation /= n;
  out.total = out.prediction + alpha * out.relation;
  return out;
}

std::shared_ptr<const num::CustomOp> relation_op(const QuestionGraph& g) {
  auto op = std::make_shared<num::CustomOp>();
  op->label = "relation";
  op->forward = [&g](const num::Tensor& p) { return num::Tensor::scalar(quad_form(g, p.values())); };
  op->vjp = [&g](const num::Tensor& p, const num::Tensor&, const num::Tensor& gy) {
    auto lp = quad_form_grad(g, p.values());
    const double s = gy.item();
    for (double& v : lp) v *= s;
    return num::Tensor(p.shape(), std::move(lp));
  };
  return op;
}

RecordedLoss record_loss(num::CompGraph& graph, std::span<const Interaction> steps, ModelParams& params,
                         const QuestionGraph* g, double alpha) {
  const auto preds = record_forward(graph, steps, params);
  const std::size_t q = params.questions();
  const double n = static_cast<double>(preds.size());
  const num::NodeId one = graph.constant(num::Tensor::scalar(1.0));
  std::shared_ptr<const num::CustomOp> rel = g ? relation_op(*g) : nullptr;

  num::NodeId pred_sum = num::kNoNode;
  num::NodeId rel_sum = num::kNoNode;
  auto accumulate = [&graph](num::NodeId& acc, num::NodeId term) { acc = acc == num::kNoNode ? term : graph.add(acc, term); };
  for (std::size_t t = 0; t < preds.size(); ++t) {
    const Interaction& next = steps[t + 1];
    if (next.question >= q) throw IndexError("question " + std::to_string(next.question) + " outside " + std::to_string(q));
    num::Tensor onehot({q});
    onehot[next.question] = 1.0;
    const num::NodeId sel = graph.dot(preds[t], graph.constant(std::move(onehot)));
    // Clamping sel to [eps, 1-eps] only matters for the term that is present.
    const num::NodeId term = next.correct ? graph.log(sel, kProbabilityEpsilon)
                                          : graph.log(graph.sub(one, sel), kProbabilityEpsilon);
    accumulate(pred_sum, term);
    if (rel) accumulate(rel_sum, graph.custom(preds[t], rel));
  }

  RecordedLoss out;
  out.prediction = graph.scale(pred_sum, -1.0 / n);
  out.total = out.prediction;
  if (rel) {
    out.relation = graph.scale(rel_sum, 1.0 / n);
    out.total = graph.add(out.prediction, graph.scale(out.relation, alpha));
  }
  return out;
}

std::vector<std::span<const Interaction>> truncation_windows(const InteractionSequence& seq, std::size_t window) {
  if (window < 1) throw ValidationError("truncation window must be >= 1");
  std::vector<std::span<const Interaction>> out;
  const std::span<const Interaction> all(seq.steps);
  for (std::size_t start = 0; start + 1 < all.size(); start += window) {
    out.push_back(all.subspan(start, std::min(window + 1, all.size() - start)));
  }
  return out;
}

FitResult fit(const Dataset& train, const Dataset& validation, ModelParams params, const QuestionGraph* g,
              const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  params.train_embedding = cfg.train_embedding;
  params.validate();
  if (g && g->question_count() != params.questions()) {
    throw ValidationError("graph has " + std::to_string(g->question_count()) + " questions, model has " + std::to_string(params.questions()));
  }
  std::vector<std::span<const Interaction>> units;
  for (const auto& seq : train) {
    if (seq.size() < 2) throw ValidationError("training sequence for student " + seq.student + " has fewer than 2 interactions");
    for (auto w : truncation_windows(seq, cfg.max_seq_len)) units.push_back(w);
  }
  if (units.empty()) throw ValidationError("training set is empty");

  FitResult result;
  auto trainable = params.trainable();
  Optimizer opt(cfg, trainable);
  std::vector<num::Tensor> grads;
  for (const auto& [name, t] : trainable) grads.emplace_back(t->shape());

  ModelParams best = params;
  double best_auc = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t update = 0;
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, {kShuffleStream, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;

    for (std::size_t b = 0; b * cfg.batch_size < order.size(); ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      for (auto& gt : grads) gt.fill(0.0);
      for (std::size_t k = lo; k < hi; ++k) {
        num::CompGraph graph;
        const RecordedLoss loss = record_loss(graph, units[order[k]], params, g, cfg.alpha);
        try {
          graph.eval_forward();
        } catch (const NumericError& e) {
          throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                             ", update step " + std::to_string(update) + ": " + e.what());
        }
        const double lp = graph.value(loss.prediction).item();
        const double lr = loss.relation != num::kNoNode ? graph.value(loss.relation).item() : 0.0;
        rec.train.prediction += lp;
        rec.train.relation += lr;
        rec.train.total += graph.value(loss.total).item();
        const auto gmap = graph.backward(loss.total);
        for (std::size_t p = 0; p < trainable.size(); ++p) {
          const auto& src = gmap.at(trainable[p].first);
          for (std::size_t i = 0; i < src.size(); ++i) grads[p][i] += inv * src[i];
        }
      }
      if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& gt : grads)
          for (double v : gt.values()) sq += v * v;
        const double norm = std::sqrt(sq);
        if (!std::isfinite(norm)) {
          throw NumericError("non-finite gradient in epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                             ", update step " + std::to_string(update));
        }
        if (norm > cfg.clip_norm) {
          const double s = cfg.clip_norm / norm;
          for (auto& gt : grads)
            for (double& v : gt.values()) v *= s;
        }
      }
      opt.step(trainable, grads);
      ++update;
    }

    const double nu = static_cast<double>(units.size());
    rec.train.prediction /= nu;
    rec.train.relation /= nu;
    rec.train.total /= nu;
    rec.validation_auc = std::numeric_limits<double>::quiet_NaN();
    bool stop = false;
    if (!validation.empty()) {
      rec.validation_auc = evaluate(params, validation).auc;
      if (rec.validation_auc > best_auc) {
        best_auc = rec.validation_auc;
        best = params;
        result.best_epoch = epoch;
        stale = 0;
      } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
        stop = true;
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }

  result.params = result.best_epoch > 0 ? std::move(best) : std::move(params);
  return result;
}

std::string format_epoch(const EpochRecord& r) {
  std::ostringstream out;
  out << r.epoch << '\t' << textio::format_double(r.train.prediction) << '\t' << textio::format_double(r.train.relation) << '\t'
      << textio::format_double(r.train.total) << '\t'
      << (std::isnan(r.validation_auc) ? std::string("nan") : textio::format_double(r.validation_auc)) << '\t'
      << textio::format_double(r.seconds);
  return out.str();
}

}  // namespace dkts
