#include "lesionattn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>


#include "lesionattn/checkpoint.hpp"
#include "lesionattn/csv.hpp"
#include "lesionattn/log.hpp"

namespace lesionattn::harness {

namespace fs = std::filesystem;
using nlohmann::json;

Method parse_method(std::string_view name) {
  if (name == "baseline") return Method::baseline;
  if (name == "lesion_attn") return Method::lesion_attn;
  if (name == "lesion_only") return Method::lesion_only;
  throw Error("unknown method '" + std::string(name) + "' (expected baseline, lesion_attn or lesion_only)");
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::baseline: return "baseline";
    case Method::lesion_attn: return "lesion_attn";
    case Method::lesion_only: return "lesion_only";
  }
  return "unknown";
}

StopMetric parse_stop_metric(std::string_view name) {
  if (name == "auroc") return StopMetric::auroc;
  if (name == "loss") return StopMetric::loss;
  throw Error("unknown early-stopping metric '" + std::string(name) + "' (expected auroc or loss)");
}

std::string_view to_string(StopMetric metric) { return metric == StopMetric::auroc ? "auroc" : "loss"; }

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::completed: return "completed";
    case RunStatus::early_stopped: return "early_stopped";
    case RunStatus::aborted_non_finite: return "aborted_non_finite";
  }
  return "unknown";
}

double LrSchedule::at(std::int64_t step) const {
  if (step < 0) throw Error("negative optimizer step");
  return initial * std::pow(factor, static_cast<double>(step / every));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (!(lambda_attn >= 0.0)) throw Error("lambda_attn must be >= 0");
  if (method != Method::lesion_attn && lambda_attn != 0.0) {
    throw Error("lambda_attn must be 0 unless method is lesion_attn");
  }
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error("rho must lie in [0,1]");
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (early_stop_patience < 1) throw Error("early_stop_patience must be >= 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw Error("lr_decay_factor must lie in (0,1]");
  if (lr_decay_every < 1) throw Error("lr_decay_every must be >= 1");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("threshold must lie in [0,1]");
  model.validate();
}

json to_json(const TrainConfig& c) {
  return {{"method", to_string(c.method)},
          {"learning_rate", c.learning_rate},
          {"lambda_attn", c.lambda_attn},
          {"rho", c.rho},
          {"epochs", c.epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"lr_decay", {{"factor", c.lr_decay_factor}, {"every", c.lr_decay_every}}},
          {"adam_betas", {c.adam_beta1, c.adam_beta2}},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"stop_metric", to_string(c.stop_metric)},
          {"threshold", c.threshold},
          {"model", model::to_json(c.model)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lambda_attn = j.value("lambda_attn", c.method == Method::lesion_attn ? 0.5 : 0.0);
    c.rho = j.value("rho", c.rho);
    c.epochs = j.value("epochs", c.epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    if (j.contains("lr_decay")) {
      c.lr_decay_factor = j.at("lr_decay").value("factor", c.lr_decay_factor);
      c.lr_decay_every = j.at("lr_decay").value("every", c.lr_decay_every);
    }
    if (j.contains("adam_betas")) {
      c.adam_beta1 = j.at("adam_betas").at(0).get<double>();
      c.adam_beta2 = j.at("adam_betas").at(1).get<double>();
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("stop_metric")) c.stop_metric = parse_stop_metric(j.at("stop_metric").get<std::string>());
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

TensorSet to_tensors(const data::Dataset& dataset) {
  if (dataset.empty()) throw Error("empty dataset");
  const auto& first = dataset.front().image;
  TensorSet out;
  out.images = torch::empty({static_cast<std::int64_t>(dataset.size()), first.channels, first.height, first.width});
  out.labels = torch::empty({static_cast<std::int64_t>(dataset.size())});
  const bool all_masks = std::all_of(dataset.begin(), dataset.end(), [](const auto& d) { return d.mask.has_value(); });
  if (all_masks) out.masks = torch::empty({static_cast<std::int64_t>(dataset.size()), first.height, first.width});
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& item = dataset[i];
    if (item.image.channels != first.channels || item.image.height != first.height || item.image.width != first.width) {
      throw Error("sample '" + item.source_id + "' has a different image shape");
    }
    const auto row = static_cast<std::int64_t>(i);
    out.images[row].copy_(model::to_tensor(item.image));
    out.labels[row] = static_cast<float>(item.label);
    if (all_masks) {
      if (item.mask->rows != first.height || item.mask->cols != first.width) {
        throw Error("sample '" + item.source_id + "': mask shape differs from image");
      }
      out.masks[row].copy_(model::to_tensor(*item.mask));
    }
  }
  return out;
}

namespace {

constexpr std::int64_t kInferenceBatch = 256;

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void require_masks(const data::Dataset& dataset, const char* role, std::string_view why) {
  for (const auto& item : dataset) {
    if (!item.mask) throw Error(std::string(why) + ": sample '" + item.source_id + "' in the " + role + " set has no lesion mask");
  }
}

torch::Tensor model_input(Method method, const torch::Tensor& images, const torch::Tensor& masks) {
  return method == Method::lesion_only ? model::lesion_only_input(images, masks) : images;
}

struct ScoredBatch {
  torch::Tensor logits;
  torch::Tensor scores;
  torch::Tensor attention;
};

ScoredBatch score_all(model::Rann& net, Method method, const TensorSet& set, bool keep_attention) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> logits, scores, attention;
  const auto n = set.images.size(0);
  for (std::int64_t i = 0; i < n; i += kInferenceBatch) {
    const auto end = std::min(n, i + kInferenceBatch);
    const auto x = set.images.slice(0, i, end);
    const auto m = method == Method::lesion_only ? set.masks.slice(0, i, end) : torch::Tensor();
    const auto out = net->forward(model_input(method, x, m));
    logits.push_back(out.logits);
    scores.push_back(out.scores);
    if (keep_attention) attention.push_back(out.attention);
  }
  ScoredBatch b{torch::cat(logits), torch::cat(scores), {}};
  if (keep_attention) b.attention = torch::cat(attention);
  return b;
}

fairmetrics::GroupedPredictions grouped(const data::Dataset& dataset, const torch::Tensor& scores) {
  fairmetrics::GroupedPredictions g;
  const auto s = scores.to(torch::kFloat64).contiguous();
  const double* p = s.data_ptr<double>();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    g.scores.push_back(std::clamp(p[i], 0.0, 1.0));
    g.labels.push_back(dataset[i].label);
    g.groups.push_back(dataset[i].group);
  }
  return g;
}

json history_to_json(const std::vector<EpochMetrics>& history) {
  json out = json::array();
  for (const auto& e : history) {
    out.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_auroc", e.val_auroc},
                   {"val_eo", std::isnan(e.val_eo) ? json(nullptr) : json(e.val_eo)},
                   {"val_loss", e.val_loss},
                   {"learning_rate", e.learning_rate}});
  }
  return out;
}

std::vector<EpochMetrics> history_from_json(const json& j) {
  std::vector<EpochMetrics> out;
  for (const auto& e : j) {
    EpochMetrics m;
    m.epoch = e.at("epoch").get<int>();
    m.train_loss = e.at("train_loss").get<double>();
    m.val_auroc = e.at("val_auroc").get<double>();
    m.val_eo = e.at("val_eo").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("val_eo").get<double>();
    m.val_loss = e.at("val_loss").get<double>();
    m.learning_rate = e.at("learning_rate").get<double>();
    out.push_back(m);
  }
  return out;
}

void write_metrics_csv(const fs::path& path, const std::vector<EpochMetrics>& history) {
  csv::Table t;
  t.header = {"epoch", "train_loss", "val_auroc", "val_eo", "val_loss", "learning_rate"};
  for (const auto& e : history) {
    t.rows.push_back({std::to_string(e.epoch), csv::format_double(e.train_loss), csv::format_double(e.val_auroc),
                      std::isnan(e.val_eo) ? "" : csv::format_double(e.val_eo), csv::format_double(e.val_loss),
                      csv::format_double(e.learning_rate)});
  }
  csv::write(path, t);
}

void write_json(const fs::path& path, const json& j) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

struct TrainState {
  int next_epoch = 0;
  std::int64_t step = 0;
  int best_epoch = -1;
  double best_metric = 0.0;
  int since_best = 0;
  bool finished = false;
  RunStatus status = RunStatus::completed;
  std::string diagnostic;
  std::vector<EpochMetrics> history;
  std::vector<double> lr_per_step;
};

json state_to_json(const TrainState& s) {
  return {{"next_epoch", s.next_epoch},   {"step", s.step},
          {"best_epoch", s.best_epoch},   {"best_metric", s.best_metric},
          {"since_best", s.since_best},   {"finished", s.finished},
          {"status", to_string(s.status)}, {"diagnostic", s.diagnostic},
          {"history", history_to_json(s.history)}, {"lr_per_step", s.lr_per_step}};
}

TrainState state_from_json(const json& j) {
  TrainState s;
  s.next_epoch = j.at("next_epoch").get<int>();
  s.step = j.at("step").get<std::int64_t>();
  s.best_epoch = j.at("best_epoch").get<int>();
  s.best_metric = j.at("best_metric").get<double>();
  s.since_best = j.at("since_best").get<int>();
  s.finished = j.at("finished").get<bool>();
  const auto status = j.at("status").get<std::string>();
  s.status = status == "early_stopped"        ? RunStatus::early_stopped
             : status == "aborted_non_finite" ? RunStatus::aborted_non_finite
                                              : RunStatus::completed;
  s.diagnostic = j.value("diagnostic", "");
  s.history = history_from_json(j.at("history"));
  s.lr_per_step = j.at("lr_per_step").get<std::vector<double>>();
  return s;
}

json checkpoint_metadata(const TrainConfig& config, int epoch) {
  return {{"train_config", to_json(config)}, {"epoch", epoch}};
}

}  // namespace

RunRecord train(const TrainConfig& config, const data::DatasetSplit& split, const TrainOptions& options) {
  config.validate();
  if (split.train.empty() || split.validation.empty()) throw Error("training needs nonempty train and validation sets");
  if (config.method == Method::lesion_attn) require_masks(split.train, "training", "lesion_attn needs masks");
  if (config.method == Method::lesion_only) {
    require_masks(split.train, "training", "lesion_only crops inputs with masks");
    require_masks(split.validation, "validation", "lesion_only crops inputs with masks");
  }

  RunRecord record;
  record.id = run_id(config);
  record.config = config;

  model::ModelConfig mcfg = config.model;
  mcfg.seed = config.seed;
  model::Rann net(mcfg);
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate)
                                                      .betas({config.adam_beta1, config.adam_beta2}));
  const LrSchedule schedule = config.schedule();

  const TensorSet train_set = to_tensors(split.train);
  const TensorSet val_set = to_tensors(split.validation);

  TrainState state;
  state.best_metric = config.stop_metric == StopMetric::auroc ? -std::numeric_limits<double>::infinity()
                                                               : std::numeric_limits<double>::infinity();
  std::vector<torch::Tensor> best_params = model::snapshot_parameters(net);

  const auto dir = options.run_dir;
  if (dir) {
    fs::create_directories(*dir);
    const auto state_path = *dir / "state.json";
    if (options.resume && fs::exists(state_path)) {
      const json saved_config = read_json(*dir / "config.json");
      if (saved_config != to_json(config)) throw Error(dir->string() + ": existing run has a different configuration");
      state = state_from_json(read_json(state_path));
      auto last = model::load_checkpoint(*dir / "last.ckpt");
      model::restore_parameters(net, model::snapshot_parameters(last.model));
      if (state.best_epoch >= 0) {
        auto best = model::load_checkpoint(*dir / "best.ckpt");
        best_params = model::snapshot_parameters(best.model);
      }
      if (fs::exists(*dir / "optimizer.pt")) torch::load(optimizer, (*dir / "optimizer.pt").string());
      log_info("resuming " + record.id + " at epoch " + std::to_string(state.next_epoch));
    } else {
      write_json(*dir / "config.json", to_json(config));
    }
  }

  const auto n_train = train_set.images.size(0);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
  int epochs_this_call = 0;

  while (!state.finished && state.next_epoch < config.epochs) {
    if (options.max_epochs_this_call && epochs_this_call >= *options.max_epochs_this_call) break;
    const int epoch = state.next_epoch;
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(epoch_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const auto perm = torch::tensor(order, torch::kLong);

    double loss_sum = 0.0;
    double last_lr = schedule.at(state.step);
    bool aborted = false;
    for (std::int64_t start = 0; start < n_train; start += config.batch_size) {
      const auto idx = perm.slice(0, start, std::min(n_train, start + config.batch_size));
      const auto x = train_set.images.index_select(0, idx);
      const auto y = train_set.labels.index_select(0, idx);
      const bool need_masks = config.method != Method::baseline;
      const auto m = need_masks ? train_set.masks.index_select(0, idx) : torch::Tensor();

      last_lr = schedule.at(state.step);
      for (auto& group : optimizer.param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(last_lr);
      }
      const auto out = net->forward(model_input(config.method, x, m));
      auto loss = torch::binary_cross_entropy_with_logits(out.logits, y);
      if (config.method == Method::lesion_attn) {
        loss = loss + config.lambda_attn * model::attention_loss(out.attention, m, config.rho).mean();
      }
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        state.status = RunStatus::aborted_non_finite;
        state.diagnostic = "non-finite loss " + csv::format_double(value) + " at epoch " + std::to_string(epoch) + " step " + std::to_string(state.step);
        aborted = true;
        break;
      }
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      state.lr_per_step.push_back(last_lr);
      ++state.step;
      loss_sum += value * static_cast<double>(idx.size(0));
    }
    if (aborted) {
      state.finished = true;
      log_error(record.id + ": " + state.diagnostic);
      break;
    }

    const auto val = score_all(net, config.method, val_set, false);
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train_loss = loss_sum / static_cast<double>(n_train);
    const auto val_grouped = grouped(split.validation, val.scores);
    metrics.val_auroc = fairmetrics::auroc(val_grouped);
    try {
      metrics.val_eo = fairmetrics::equalized_odds(fairmetrics::group_rates(val_grouped, config.threshold)).eo;
    } catch (const Error&) {
      metrics.val_eo = std::numeric_limits<double>::quiet_NaN();
    }
    metrics.val_loss = torch::binary_cross_entropy_with_logits(val.logits, val_set.labels).item<double>();
    metrics.learning_rate = last_lr;
    state.history.push_back(metrics);
    if (options.on_epoch) options.on_epoch(metrics);

    const double monitored = config.stop_metric == StopMetric::auroc ? metrics.val_auroc : metrics.val_loss;
    const bool improved =
        config.stop_metric == StopMetric::auroc ? monitored > state.best_metric : monitored < state.best_metric;
    if (improved) {
      state.best_metric = monitored;
      state.best_epoch = epoch;
      state.since_best = 0;
      best_params = model::snapshot_parameters(net);
      if (dir) model::save_checkpoint(*dir / "best.ckpt", net, checkpoint_metadata(config, epoch));
    } else {
      ++state.since_best;
    }
    state.next_epoch = epoch + 1;
    if (state.since_best >= config.early_stop_patience) {
      state.status = RunStatus::early_stopped;
      state.finished = true;
    } else if (state.next_epoch >= config.epochs) {
      state.status = RunStatus::completed;
      state.finished = true;
    }
    ++epochs_this_call;

    if (dir) {
      model::save_checkpoint(*dir / "last.ckpt", net, checkpoint_metadata(config, epoch));
      torch::save(optimizer, (*dir / "optimizer.pt").string());
      write_metrics_csv(*dir / "metrics.csv", state.history);
      write_json(*dir / "state.json", state_to_json(state));
    }
  }
  if (dir) write_json(*dir / "state.json", state_to_json(state));

  record.epoch_history = state.history;
  record.best_epoch = state.best_epoch;
  record.status = state.status;
  record.diagnostic = state.diagnostic;
  record.optimizer_steps = state.step;
  record.lr_per_step = state.lr_per_step;
  if (!state.finished || state.best_epoch < 0) {
    record.model = net;
    return record;  // interrupted (resumable) or aborted before any epoch
  }

  model::restore_parameters(net, best_params);
  record.model = net;
  record.validation_report = evaluate(net, config.method, split.validation, config.threshold).report;
  if (!split.test.empty()) {
    if (config.method == Method::lesion_only) require_masks(split.test, "test", "lesion_only crops inputs with masks");
    record.test_report = evaluate(net, config.method, split.test, config.threshold).report;
  }
  if (dir) {
    record.best_checkpoint = *dir / "best.ckpt";
    json report{{"run_id", record.id},
                {"status", to_string(record.status)},
                {"best_epoch", record.best_epoch},
                {"validation", fairmetrics::to_json(*record.validation_report)}};
    if (record.test_report) report["test"] = fairmetrics::to_json(*record.test_report);
    write_json(*dir / "report.json", report);
  }
  return record;
}

Predictions predict(model::Rann& net, Method method, const data::Dataset& dataset, bool keep_attention) {
  if (net.is_empty()) throw Error("model is not initialized");
  if (method == Method::lesion_only) require_masks(dataset, "evaluation", "lesion_only crops inputs with masks");
  // Masks are only converted when the method consumes them.
  TensorSet set;
  if (method == Method::lesion_only) {
    set = to_tensors(dataset);
  } else {
    set = to_tensors(data::strip_masks(dataset));
  }
  const auto scored = score_all(net, method, set, keep_attention);
  Predictions p;
  p.grouped = grouped(dataset, scored.scores);
  for (const auto& item : dataset) p.ids.push_back(item.source_id);
  if (keep_attention) {
    for (std::int64_t i = 0; i < scored.attention.size(0); ++i) p.attention.push_back(model::to_attention_map(scored.attention[i]));
  }
  return p;
}

Evaluation evaluate(model::Rann& net, Method method, const data::Dataset& dataset, double threshold,
                    const fairmetrics::ReportOptions& options) {
  if (dataset.empty()) throw Error("evaluation dataset is empty");
  Evaluation e;
  e.predictions = predict(net, method, dataset, false);
  e.report = fairmetrics::fairness_report(e.predictions.grouped, threshold, options);
  return e;
}

Evaluation evaluate(const fs::path& checkpoint, const data::Dataset& dataset, double threshold,
                    const fairmetrics::ReportOptions& options) {
  auto ckpt = model::load_checkpoint(checkpoint);
  Method method = Method::baseline;
  if (ckpt.metadata.contains("train_config")) {
    method = parse_method(ckpt.metadata.at("train_config").value("method", "baseline"));
  }
  return evaluate(ckpt.model, method, dataset, threshold, options);
}

std::string run_id(const TrainConfig& c) {
  std::string id = std::string(to_string(c.method)) + "_lr" + format_g(c.learning_rate);
  if (c.method == Method::lesion_attn) id += "_lam" + format_g(c.lambda_attn) + "_rho" + format_g(c.rho);
  id += "_bs" + std::to_string(c.batch_size) + "_s" + std::to_string(c.seed);
  return id;
}

std::map<std::string, std::string> hyperparams_of(const TrainConfig& c) {
  std::map<std::string, std::string> h{{"method", std::string(to_string(c.method))},
                                       {"learning_rate", format_g(c.learning_rate)},
                                       {"batch_size", std::to_string(c.batch_size)},
                                       {"seed", std::to_string(c.seed)}};
  if (c.method == Method::lesion_attn) {
    h["lambda_attn"] = format_g(c.lambda_attn);
    h["rho"] = format_g(c.rho);
  }
  return h;
}

TrainConfig apply_grid_point(TrainConfig config, const std::map<std::string, double>& point) {
  for (const auto& [key, value] : point) {
    if (key == "learning_rate") config.learning_rate = value;
    else if (key == "lambda_attn") config.lambda_attn = value;
    else if (key == "rho") config.rho = value;
    else if (key == "batch_size") config.batch_size = static_cast<int>(value);
    else if (key == "epochs") config.epochs = static_cast<int>(value);
    else if (key == "early_stop_patience") config.early_stop_patience = static_cast<int>(value);
    else throw Error("unknown grid parameter '" + key + "'");
  }
  return config;
}

double best_val_auroc(const RunRecord& record) {
  for (const auto& e : record.epoch_history) {
    if (e.epoch == record.best_epoch) return e.val_auroc;
  }
  if (record.validation_report) return record.validation_report->auroc;
  return std::numeric_limits<double>::quiet_NaN();
}

GridResult choose_best(std::vector<RunRecord> records, const std::vector<std::string>& grid_keys) {
  if (records.empty()) throw Error("no runs to choose from");
  auto point_of = [&](const RunRecord& r) {
    std::map<std::string, double> p;
    const auto& c = r.config;
    for (const auto& k : grid_keys) {
      if (k == "learning_rate") p[k] = c.learning_rate;
      else if (k == "lambda_attn") p[k] = c.lambda_attn;
      else if (k == "rho") p[k] = c.rho;
      else if (k == "batch_size") p[k] = c.batch_size;
      else if (k == "epochs") p[k] = c.epochs;
      else if (k == "early_stop_patience") p[k] = c.early_stop_patience;
      else throw Error("unknown grid parameter '" + k + "'");
    }
    return p;
  };
  // Preserve first-seen order so ties resolve to the earliest grid point.
  std::vector<std::map<std::string, double>> points;
  std::map<std::map<std::string, double>, std::pair<double, int>> sums;
  std::map<std::map<std::string, double>, std::size_t> first_record;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto p = point_of(records[i]);
    const double v = best_val_auroc(records[i]);
    if (!sums.count(p)) {
      points.push_back(p);
      first_record[p] = i;
    }
    auto& [sum, n] = sums[p];
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  GridResult out;
  out.best_mean_val_auroc = -std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    const auto& [sum, n] = sums[p];
    if (n == 0) continue;
    const double mean = sum / n;
    if (mean > out.best_mean_val_auroc) {
      out.best_mean_val_auroc = mean;
      out.best_point = p;
      out.best_config = records[first_record[p]].config;
    }
  }
  if (!std::isfinite(out.best_mean_val_auroc)) throw Error("no run produced a validation AUROC");
  out.records = std::move(records);
  return out;
}

GridResult grid_search(const Grid& grid, const TrainConfig& base, const data::DatasetSplit& split, int n_seeds,
                       const std::optional<fs::path>& root_dir) {
  if (grid.empty()) throw Error("grid search needs at least one parameter axis");
  if (n_seeds < 1) throw Error("n_seeds must be >= 1");
  std::vector<std::string> keys;
  for (const auto& [k, values] : grid) {
    if (values.empty()) throw Error("grid axis '" + k + "' is empty");
    keys.push_back(k);
  }
  std::vector<std::map<std::string, double>> points{{}};
  for (const auto& k : keys) {
    std::vector<std::map<std::string, double>> next;
    for (const auto& p : points) {
      for (double v : grid.at(k)) {
        auto q = p;
        q[k] = v;
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  std::vector<RunRecord> records;
  for (const auto& p : points) {
    for (int s = 0; s < n_seeds; ++s) {
      TrainConfig c = apply_grid_point(base, p);
      c.seed = base.seed + static_cast<std::uint64_t>(s);
      TrainOptions opts;
      if (root_dir) opts.run_dir = *root_dir / run_id(c);
      log_info("grid run " + run_id(c));
      records.push_back(train(c, split, opts));
    }
  }
  return choose_best(std::move(records), keys);
}

std::vector<pareto::ModelCandidate> emit_candidates(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error("no run records to emit candidates from");
  std::vector<pareto::ModelCandidate> out;
  for (const auto& r : records) {
    if (!r.validation_report) throw Error("run '" + r.id + "' has no validation report");
    pareto::ModelCandidate c;
    c.id = r.id;
    c.hyperparams = hyperparams_of(r.config);
    c.p_pred = r.validation_report->auroc;
    c.p_fair = 1.0 - r.validation_report->eo;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace lesionattn::harness
