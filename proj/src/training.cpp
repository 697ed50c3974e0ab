#include "splitface/training.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "splitface/rng.hpp"
#include "splitface/text.hpp"

namespace splitface {

void TrainConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (d < 3 || d > kPredictorCount) throw ConfigError("d must lie in [3, 16], got " + std::to_string(d));
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (eval_batch_size < 1) throw ConfigError("eval batch size must be positive");
  if (epochs_stage1 < 0 || epochs_stage2 < 0) throw ConfigError("epoch counts must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(width_scale > 0.0)) throw ConfigError("width scale must be positive");
  if (!prob(segment_dropout) || !prob(flip_probability) || !prob(partial_mix) || !prob(tau))
    throw ConfigError("probabilities and tau must lie in [0, 1]");
}

std::vector<std::string> format_epoch(const EpochRecord& r) {
  const std::string head = "stage=" + std::to_string(r.stage) + " epoch=" + std::to_string(r.epoch);
  return {head + " split=train loss=" + text::format_fixed(r.train_loss, 6) +
              " mean_acc=" + text::format_fixed(r.train_accuracy, 6),
          head + " split=val loss=" + text::format_fixed(r.val_loss, 6) +
              " mean_acc=" + text::format_fixed(r.val_accuracy, 6)};
}

namespace {

struct Snapshot {
  std::vector<nn::Tensor<float>> params;
  std::vector<nn::Tensor<float>> buffers;
  nn::AdamState<float> adam;
};

Snapshot take_snapshot(SplitFaceModel& model, const nn::AdamState<float>& adam) {
  Snapshot s;
  for (auto* p : model.parameters()) s.params.push_back(p->value);
  for (auto* b : model.buffers()) s.buffers.push_back(b->value);
  s.adam = adam;
  return s;
}

void restore(SplitFaceModel& model, nn::AdamState<float>& adam, const Snapshot& s) {
  const auto params = model.parameters();
  const auto buffers = model.buffers();
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = s.params[k];
  for (std::size_t k = 0; k < buffers.size(); ++k) buffers[k]->value = s.buffers[k];
  adam = s.adam;
  model.zero_grad();
}

// Correct GP decisions at 0.5 over every sample and attribute.
std::size_t gp_correct(const ForwardResult<float>& r, const nn::Tensor<float>& labels) {
  const auto& s = r.scores[kGlobalPredictor];
  std::size_t correct = 0;
  for (std::size_t k = 0; k < s.size(); ++k) correct += (s[k] >= 0.5f) == (labels[k] >= 0.5f);
  return correct;
}

struct EvalSummary {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalSummary evaluate_split(const SplitFaceModel& model, const Dataset& data, const std::vector<int>& items,
                           int batch_size, double tau) {
  EvalSummary out;
  if (items.empty()) return out;
  double loss = 0.0;
  std::size_t correct = 0, cells = 0;
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(items.size() - start, static_cast<std::size_t>(batch_size));
    const auto b = assemble_batch(data, std::span<const int>(items.data() + start, n), {}, tau);
    const auto r = model.infer(b.input);
    loss += model_loss(r, model.mask(), b.labels, model.priors()) * static_cast<double>(n);
    correct += gp_correct(r, b.labels);
    cells += b.labels.size();
  }
  out.loss = loss / static_cast<double>(items.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(cells);
  return out;
}

}  // namespace

TrainHistory train_epochs(SplitFaceModel& model, nn::AdamState<float>& adam, const Dataset& data,
                          const TrainConfig& cfg, int stage, int epochs, int first_epoch, const TrainHooks& hooks) {
  cfg.validate();
  const auto train = data.indices(Split::train);
  const auto val = data.indices(Split::val);
  if (train.empty()) throw EmptyInput("no training images");
  adam.config.learning_rate = cfg.learning_rate;

  BatchConfig bc;
  bc.batch_size = cfg.batch_size;
  bc.flip_probability = cfg.flip_probability;
  bc.partial_mix = cfg.partial_mix;
  bc.seed = Rng::derive(cfg.seed, 10 + static_cast<std::uint64_t>(stage));
  bc.tau = cfg.tau;

  TrainHistory history;
  Snapshot good = take_snapshot(model, adam);
  for (int epoch = first_epoch; epoch < first_epoch + epochs; ++epoch) {
    BatchStream stream(data, train, bc, epoch);
    Rng dropout(Rng::derive(Rng::derive(cfg.seed, 20 + static_cast<std::uint64_t>(stage)),
                            static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t samples = 0, correct = 0, cells = 0;
    while (auto batch = stream.next()) {
      model.zero_grad();
      const auto r = model.forward_all(batch->input, &dropout, cfg.segment_dropout);
      std::array<nn::Tensor<float>, kPredictorCount> grads;
      const double loss = model_loss(r, model.mask(), batch->labels, model.priors(), &grads);
      if (!std::isfinite(loss)) {
        restore(model, adam, good);
        throw NumericalDivergence("non-finite loss in stage " + std::to_string(stage) + " epoch " +
                                  std::to_string(epoch) + "; restored the state after epoch " +
                                  std::to_string(epoch - 1));
      }
      model.backward(grads);
      nn::adam_step(model.parameters(), adam);
      history.batch_losses.push_back(loss);
      const int n = batch->input.batch();
      loss_sum += loss * n;
      samples += static_cast<std::size_t>(n);
      correct += gp_correct(r, batch->labels);
      cells += batch->labels.size();
    }
    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(samples);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(cells);
    const auto v = evaluate_split(model, data, val, cfg.eval_batch_size, cfg.tau);
    rec.val_loss = v.loss;
    rec.val_accuracy = v.accuracy;
    history.epochs.push_back(rec);
    if (hooks.log)
      for (const auto& line : format_epoch(rec)) hooks.log(line);
    good = take_snapshot(model, adam);
    if (hooks.epoch_end) hooks.epoch_end(stage, epoch);
  }
  model.zero_grad();
  return history;
}

TrainHistory train_stage1(SplitFaceModel& model, nn::AdamState<float>& adam, const Dataset& data,
                          const TrainConfig& cfg, const TrainHooks& hooks) {
  if (!(model.mask() == AttributeMask::full(model.num_attributes())))
    throw ConfigError("stage 1 needs full attribute masks");
  if (data.annotations().num_attributes() != model.num_attributes())
    throw ShapeMismatch("dataset has " + std::to_string(data.annotations().num_attributes()) +
                        " attributes, model has " + std::to_string(model.num_attributes()));
  const auto priors = compute_priors(data.labels(), Split::train);
  model.priors().assign(priors.begin(), priors.end());
  return train_epochs(model, adam, data, cfg, 1, cfg.epochs_stage1, 1, hooks);
}

TrainHistory train_stage2(SplitFaceModel& model, nn::AdamState<float>& adam, const AttributeMask& pruned,
                          const Dataset& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  model.prune_heads(pruned, &adam);
  return train_epochs(model, adam, data, cfg, 2, cfg.epochs_stage2, 1, hooks);
}

std::vector<std::vector<int>> labels_of(const Dataset& data, std::span<const int> items) {
  std::vector<std::vector<int>> out;
  out.reserve(items.size());
  for (int i : items) out.push_back(data.annotations().labels[static_cast<std::size_t>(i)]);
  return out;
}

ScoreMatrix score_dataset(const SplitFaceModel& model, const Dataset& data, std::span<const int> items,
                          int batch_size, double tau) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  ScoreMatrix m;
  const int K = model.num_attributes();
  m.num_attributes = K;
  const auto& mask = model.mask();
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(items.size() - start, static_cast<std::size_t>(batch_size));
    const auto b = assemble_batch(data, items.subspan(start, n), {}, tau);
    const auto r = model.infer(b.input);
    for (std::size_t s = 0; s < n; ++s) {
      ImageScores row;
      row.visible = b.input.visible[s];
      for (int i = 0; i < kPredictorCount; ++i) {
        row.scores[i].assign(static_cast<std::size_t>(K), std::numeric_limits<double>::quiet_NaN());
        const auto& attrs = mask.attributes[i];
        for (std::size_t k = 0; k < attrs.size(); ++k)
          row.scores[i][attrs[k]] = r.scores[i].at(static_cast<int>(s), static_cast<int>(k));
      }
      m.images.push_back(data.name(static_cast<std::size_t>(items[start + s])));
      m.rows.push_back(std::move(row));
    }
  }
  return m;
}

PredictorRanking rank_predictors(const ScoreMatrix& validation, const std::vector<std::vector<int>>& labels,
                                 const AttributeMask& mask) {
  if (validation.rows.empty()) throw EmptyValidationSet("ranking needs at least one validation image");
  return rank_from_thresholds(calibrate_thresholds(validation, labels, mask), mask);
}

AttributeMask prune_masks(const PredictorRanking& ranking, int d) {
  if (d < 3) throw ConfigError("d must be at least 3, got " + std::to_string(d));
  AttributeMask mask;
  for (std::size_t a = 0; a < ranking.order.size(); ++a) {
    mask.attributes[kFullPredictor].push_back(static_cast<int>(a));
    mask.attributes[kGlobalPredictor].push_back(static_cast<int>(a));
    int slots = d - 2;
    for (int i : ranking.order[a]) {
      if (slots == 0) break;
      if (i == kFullPredictor || i == kGlobalPredictor) continue;
      mask.attributes[i].push_back(static_cast<int>(a));
      --slots;
    }
  }
  return mask;
}

void write_ranking_file(const std::filesystem::path& path, const PredictorRanking& ranking,
                        const std::vector<std::string>& attribute_names) {
  std::string out = "attribute,rank,predictor,val_accuracy\n";
  for (std::size_t a = 0; a < ranking.order.size(); ++a)
    for (std::size_t r = 0; r < ranking.order[a].size(); ++r) {
      const int i = ranking.order[a][r];
      out += attribute_names.at(a) + "," + std::to_string(r + 1) + "," + predictor_name(i) + "," +
             text::format_exact(ranking.accuracy[a][i]) + "\n";
    }
  text::write_file(path, out);
}

PredictorRanking read_ranking_file(const std::filesystem::path& path,
                                   const std::vector<std::string>& attribute_names) {
  if (!std::filesystem::exists(path)) throw MissingInput("ranking table " + path.string() + " not found");
  const auto lines = text::read_lines(path);
  const std::size_t K = attribute_names.size();
  PredictorRanking r;
  r.order.resize(K);
  r.accuracy.resize(K);
  for (auto& acc : r.accuracy) acc.fill(-1.0);
  std::vector<std::map<int, int>> by_rank(K);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto f = text::split(lines[ln], ',');
    const std::string at = path.string() + ":" + std::to_string(ln + 1);
    if (f.size() != 4) throw MalformedRow(at + ": expected 4 fields");
    const auto it = std::find(attribute_names.begin(), attribute_names.end(), f[0]);
    const auto rank = text::to_int(f[1]);
    const auto pred = parse_predictor_name(f[2]);
    const auto acc = text::to_double(f[3]);
    if (it == attribute_names.end() || !rank || !pred || !acc) throw MalformedRow(at + ": bad ranking row");
    const auto a = static_cast<std::size_t>(it - attribute_names.begin());
    by_rank[a][static_cast<int>(*rank)] = *pred;
    r.accuracy[a][*pred] = *acc;
  }
  for (std::size_t a = 0; a < K; ++a)
    for (const auto& [rank, i] : by_rank[a]) r.order[a].push_back(i);
  return r;
}

}  // namespace splitface
