// lesionattn: command-line front end for data generation, training,
// evaluation, Pareto selection and attention audits.
//
// Every subcommand reads an optional JSON config (--config) whose keys are
// overridden by explicit flags; relative paths resolve against --workdir.
// Failures print {"error": ..., "command": ...} on stderr and exit 1; usage
// errors exit 2.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lesionattn/analysis.hpp"
#include "lesionattn/audit.hpp"
#include "lesionattn/checkpoint.hpp"
#include "lesionattn/csv.hpp"
#include "lesionattn/data_pipeline.hpp"
#include "lesionattn/fairmetrics.hpp"
#include "lesionattn/harness.hpp"
#include "lesionattn/log.hpp"
#include "lesionattn/pareto.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lesionattn;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Flag text becomes a JSON value when it parses as one (numbers, booleans,
// arrays, objects); anything else stays a string.
json flag_value(const std::string& text) {
  try {
    json v = json::parse(text);
    if (!v.is_string() && !v.is_null()) return v;
  } catch (const json::exception&) {
  }
  return text;
}

// One subcommand: its CLI11 handle, the config path, and flag overrides
// keyed by config key.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flag_text;
  std::vector<std::pair<std::string, CLI::Option*>> flags;

  void flag(const std::string& key, const std::string& help) {
    std::string name = "--" + key;
    for (auto& ch : name)
      if (ch == '_') ch = '-';
    flags.emplace_back(key, app->add_option(name, flag_text[key], help));
  }

  // Config file merged with explicit flags; dotted keys address nested objects.
  [[nodiscard]] json settings(const fs::path& workdir) const {
    json cfg = json::object();
    if (!config_path.empty()) {
      fs::path p = config_path;
      if (p.is_relative()) p = workdir / p;
      if (!fs::exists(p)) throw Error("config file not found: " + p.string());
      cfg = read_json_file(p);
      if (!cfg.is_object()) throw Error(p.string() + ": config must be a JSON object");
    }
    for (const auto& [key, opt] : flags) {
      if (opt->count() == 0) continue;
      std::string pointer = "/" + key;
      for (auto& ch : pointer)
        if (ch == '.') ch = '/';
      cfg[json::json_pointer(pointer)] = flag_value(flag_text.at(key));
    }
    return cfg;
  }
};

struct Context {
  fs::path workdir;
  json cfg;

  [[nodiscard]] fs::path path(const std::string& key, const std::string& fallback = "") const {
    std::string text = cfg.contains(key) ? cfg.at(key).get<std::string>() : fallback;
    if (text.empty()) throw Error("missing required setting '" + key + "'");
    fs::path p = text;
    return p.is_relative() ? workdir / p : p;
  }
  [[nodiscard]] bool has(const std::string& key) const { return cfg.contains(key); }
  template <typename T>
  [[nodiscard]] T get(const std::string& key, const T& fallback) const {
    try {
      return cfg.value(key, fallback);
    } catch (const json::exception& e) {
      throw Error("setting '" + key + "' has the wrong type: " + e.what());
    }
  }
};

// Dataset directories carry dataset.json with their resolution.
data::Dataset load_dataset_dir(const fs::path& dir, const Context& ctx) {
  data::IngestOptions opts;
  opts.resolution = ctx.get<int>("resolution", 64);
  if (fs::exists(dir / "dataset.json")) opts.resolution = read_json_file(dir / "dataset.json").value("resolution", opts.resolution);
  const auto masks = fs::exists(dir / "masks") ? std::optional<fs::path>(dir / "masks") : std::nullopt;
  return data::load_real_dataset(dir / "metadata.csv", dir / "images", masks, opts).images;
}

data::DatasetSplit load_split(const Context& ctx) {
  const auto dataset = load_dataset_dir(ctx.path("data", "data"), ctx);
  return data::apply_split(dataset, data::read_split(ctx.path("split", "split.json")));
}

data::Dataset subset_of(const data::DatasetSplit& split, const std::string& name) {
  if (name == "test") return split.test;
  if (name == "validation") return split.validation;
  if (name == "train") return split.train;
  if (name == "all") {
    data::Dataset all = split.train;
    all.insert(all.end(), split.validation.begin(), split.validation.end());
    all.insert(all.end(), split.test.begin(), split.test.end());
    return all;
  }
  throw Error("unknown subset '" + name + "' (expected train, validation, test or all)");
}

harness::Method checkpoint_method(const model::Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("train_config")) return harness::Method::baseline;
  return harness::parse_method(ckpt.metadata.at("train_config").value("method", "baseline"));
}

std::string hash_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

json summary_json(const std::vector<data::SummaryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"group", r.name},
                   {"count", r.count},
                   {"positive_rate", r.positive_rate ? json(*r.positive_rate) : json(nullptr)},
                   {"mean_age", r.mean_age ? json(*r.mean_age) : json(nullptr)}});
  }
  return out;
}

// ---- subcommands ---------------------------------------------------------

int cmd_generate(const Context& ctx) {
  data::SyntheticSpec spec;
  spec.n_samples = ctx.get("n_samples", spec.n_samples);
  spec.resolution = ctx.get("resolution", spec.resolution);
  spec.lesion_signal_strength = ctx.get("lesion_signal_strength", spec.lesion_signal_strength);
  spec.shortcut_strength = ctx.get("shortcut_strength", spec.shortcut_strength);
  spec.context_dependence = ctx.get("context_dependence", spec.context_dependence);
  spec.group_label_correlation = ctx.get("group_label_correlation", spec.group_label_correlation);
  spec.shortcut_amplitude = ctx.get("shortcut_amplitude", spec.shortcut_amplitude);
  spec.seed = ctx.get<std::uint64_t>("seed", 0);
  const auto out = ctx.path("out", "data");
  const auto data = data::generate_synthetic(spec);
  data::write_dataset_dir(out, data);
  write_json_file(out / "dataset.json", {{"source", "synthetic"},
                                         {"resolution", spec.resolution},
                                         {"spec",
                                          {{"n_samples", spec.n_samples},
                                           {"lesion_signal_strength", spec.lesion_signal_strength},
                                           {"shortcut_strength", spec.shortcut_strength},
                                           {"context_dependence", spec.context_dependence},
                                           {"group_label_correlation", spec.group_label_correlation},
                                           {"shortcut_amplitude", spec.shortcut_amplitude},
                                           {"seed", spec.seed}}}});
  std::cout << json{{"out", out.string()}, {"n_samples", data.size()}, {"summary", summary_json(data::dataset_summary(data))}}.dump(2)
            << '\n';
  return 0;
}

int cmd_ingest(const Context& ctx) {
  data::IngestOptions opts;
  opts.resolution = ctx.get("resolution", opts.resolution);
  const std::string rule = ctx.get<std::string>("malignant", "ham");
  if (rule == "ham") {
    opts.malignant_diagnoses = data::ham_malignant_set();
  } else if (rule == "bcn") {
    opts.malignant_diagnoses = data::bcn_malignant_set();
  } else {
    opts.malignant_diagnoses.clear();
    std::stringstream ss(rule);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) opts.malignant_diagnoses.insert(item);
  }
  opts.mask_provenance = ctx.get<std::string>("mask_provenance", "");
  const auto masks = ctx.has("masks") ? std::optional<fs::path>(ctx.path("masks")) : std::nullopt;
  const auto result = data::load_real_dataset(ctx.path("metadata"), ctx.path("images"), masks, opts);
  const auto out = ctx.path("out", "data");
  data::write_dataset_dir(out, result.images);
  write_json_file(out / "dataset.json", {{"source", ctx.path("metadata").string()},
                                         {"resolution", opts.resolution},
                                         {"malignant", std::vector<std::string>(opts.malignant_diagnoses.begin(),
                                                                                opts.malignant_diagnoses.end())},
                                         {"mask_provenance", result.mask_provenance},
                                         {"dropped_missing_sex", result.dropped_missing_sex}});
  std::cout << json{{"out", out.string()},
                    {"n_samples", result.images.size()},
                    {"dropped_missing_sex", result.dropped_missing_sex},
                    {"summary", summary_json(data::dataset_summary(result.images))}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_split(const Context& ctx) {
  const auto dataset = load_dataset_dir(ctx.path("data", "data"), ctx);
  data::SplitRatios ratios;
  if (ctx.has("ratios")) {
    const auto r = ctx.cfg.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw Error("ratios must have three entries");
    ratios = {r[0], r[1], r[2]};
  }
  const auto ids = data::split_ids(dataset, ratios, ctx.get<std::uint64_t>("seed", 0));
  const auto out = ctx.path("out", "split.json");
  data::write_split(out, ids);
  std::cout << json{{"out", out.string()},
                    {"train", ids.train.size()},
                    {"validation", ids.validation.size()},
                    {"test", ids.test.size()}}
                   .dump(2)
            << '\n';
  return 0;
}

json run_summary(const harness::RunRecord& rec) {
  json j{{"run_id", rec.id},
         {"status", harness::to_string(rec.status)},
         {"best_epoch", rec.best_epoch},
         {"epochs_run", rec.epoch_history.size()}};
  if (!rec.diagnostic.empty()) j["diagnostic"] = rec.diagnostic;
  if (rec.validation_report) j["validation"] = fairmetrics::to_json(*rec.validation_report);
  if (rec.test_report) j["test"] = fairmetrics::to_json(*rec.test_report);
  if (rec.best_checkpoint) j["checkpoint"] = rec.best_checkpoint->string();
  return j;
}

int cmd_train(const Context& ctx) {
  const auto config = harness::train_config_from_json(ctx.cfg);
  const auto split = load_split(ctx);
  harness::TrainOptions opts;
  opts.run_dir = ctx.path("run_dir", "runs/" + harness::run_id(config));
  opts.on_epoch = [](const harness::EpochMetrics& m) {
    log_info("epoch " + std::to_string(m.epoch) + " train_loss " + csv::format_double(m.train_loss) + " val_auroc " +
             csv::format_double(m.val_auroc));
  };
  const auto rec = harness::train(config, split, opts);
  std::cout << run_summary(rec).dump(2) << '\n';
  return rec.status == harness::RunStatus::aborted_non_finite ? 1 : 0;
}

int cmd_gridsearch(const Context& ctx) {
  const auto base = harness::train_config_from_json(ctx.cfg);
  if (!ctx.has("grid")) throw Error("gridsearch needs a 'grid' object of parameter lists");
  harness::Grid grid;
  for (const auto& [k, v] : ctx.cfg.at("grid").items()) grid[k] = v.get<std::vector<double>>();
  const auto split = load_split(ctx);
  const auto out = ctx.path("out", "grid");
  const auto result = harness::grid_search(grid, base, split, ctx.get("n_seeds", 1), out / "runs");
  const auto candidates = harness::emit_candidates(result.records);
  const auto frontier = pareto::pareto_frontier(candidates);
  pareto::write_candidates_csv(out / "candidates.csv", candidates, frontier);
  json runs = json::array();
  for (const auto& r : result.records) runs.push_back(run_summary(r));
  const json summary{{"best_point", result.best_point},
                     {"best_mean_val_auroc", result.best_mean_val_auroc},
                     {"best_config", harness::to_json(result.best_config)},
                     {"candidates", (out / "candidates.csv").string()},
                     {"runs", runs}};
  write_json_file(out / "grid.json", summary);
  std::cout << json{{"best_point", result.best_point},
                    {"best_mean_val_auroc", result.best_mean_val_auroc},
                    {"n_runs", result.records.size()},
                    {"candidates", (out / "candidates.csv").string()}}
                   .dump(2)
            << '\n';
  return 0;
}

fairmetrics::ReportOptions report_options(const Context& ctx) {
  fairmetrics::ReportOptions o;
  const int rounds = ctx.get("bootstrap", 0);
  if (rounds > 0) {
    o.intervals = fairmetrics::IntervalMode::bootstrap;
    o.bootstrap_rounds = rounds;
    o.bootstrap_seed = ctx.get<std::uint64_t>("seed", 0);
  }
  return o;
}

int cmd_evaluate(const Context& ctx) {
  const auto split = load_split(ctx);
  const auto dataset = subset_of(split, ctx.get<std::string>("subset", "test"));
  auto ckpt = model::load_checkpoint(ctx.path("checkpoint"));
  const auto method = checkpoint_method(ckpt);
  const auto eval = harness::evaluate(ckpt.model, method, dataset, ctx.get("threshold", 0.5), report_options(ctx));
  const json report = fairmetrics::to_json(eval.report);
  if (ctx.has("out")) {
    const auto out = ctx.path("out");
    write_json_file(out, report);
    csv::Table preds;
    preds.header = {"image_id", "score", "label", "group"};
    for (std::size_t i = 0; i < eval.predictions.ids.size(); ++i) {
      preds.rows.push_back({eval.predictions.ids[i], csv::format_double(eval.predictions.grouped.scores[i]),
                            std::to_string(eval.predictions.grouped.labels[i]),
                            std::string(to_string(eval.predictions.grouped.groups[i]))});
    }
    auto pred_path = out;
    pred_path.replace_extension(".predictions.csv");
    csv::write(pred_path, preds);
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_select(const Context& ctx) {
  const auto candidates = pareto::read_candidates_csv(ctx.path("candidates"));
  const auto frontier = pareto::pareto_frontier(candidates);
  const auto chosen = pareto::select_final(frontier, pareto::parse_policy(ctx.get<std::string>("policy", "knee")));
  if (ctx.has("out")) pareto::write_candidates_csv(ctx.path("out"), candidates, frontier);
  std::cout << chosen.id << '\n';
  return 0;
}

int cmd_attn_audit(const Context& ctx) {
  const auto split = load_split(ctx);
  const auto dataset = subset_of(split, ctx.get<std::string>("subset", "test"));
  auto ckpt = model::load_checkpoint(ctx.path("checkpoint"));
  const auto method = checkpoint_method(ckpt);
  const auto mode = analysis::parse_binarize_mode(ctx.get<std::string>("mode", "topk"));
  const auto stats = audit::alignment_stats(ckpt.model, method, dataset, mode);
  const auto out = ctx.path("out", "audit");
  fs::create_directories(out);
  write_json_file(out / "alignment.json", analysis::to_json(stats));
  const auto ids = audit::sample_figure_cases(dataset, ctx.get<std::uint64_t>("seed", 0));
  const auto overlays = audit::render_cases(ckpt.model, method, dataset, ids, out);
  json files = json::array();
  for (const auto& p : overlays) files.push_back(p.string());
  std::cout << json{{"median_iou", stats.median},
                    {"sd_iou", stats.sd},
                    {"n", stats.records.size()},
                    {"alignment", (out / "alignment.json").string()},
                    {"overlays", files}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_plot(const Context& ctx) {
  std::vector<double> scores;
  std::vector<int> labels;
  if (ctx.has("predictions")) {
    const auto table = csv::read(ctx.path("predictions"));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      scores.push_back(std::stod(table.get(r, "score")));
      labels.push_back(std::stoi(table.get(r, "label")));
    }
  } else {
    const auto split = load_split(ctx);
    const auto dataset = subset_of(split, ctx.get<std::string>("subset", "test"));
    auto ckpt = model::load_checkpoint(ctx.path("checkpoint"));
    const auto preds = harness::predict(ckpt.model, checkpoint_method(ckpt), dataset);
    scores = preds.grouped.scores;
    labels = preds.grouped.labels;
  }
  const auto prefix = ctx.path("out", "plots/curves");
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  const auto files = analysis::plot_curves(scores, labels, prefix);
  std::cout << json{{"roc_csv", files.roc_csv.string()},
                    {"roc_png", files.roc_png.string()},
                    {"pr_csv", files.pr_csv.string()},
                    {"pr_png", files.pr_png.string()},
                    {"auroc", fairmetrics::auroc(scores, labels)},
                    {"auprc", fairmetrics::auprc(scores, labels)}}
                   .dump(2)
            << '\n';
  return 0;
}

// Bundles run reports found under a runs root: per-method seed summaries
// for each cohort, CI-overlap comparisons against the baseline, referenced
// artifacts and provenance.
int cmd_report(const Context& ctx) {
  const auto root = ctx.path("runs", "runs");
  if (!fs::is_directory(root)) throw Error("runs directory not found: " + root.string());
  std::vector<fs::path> run_dirs;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") run_dirs.push_back(entry.path().parent_path());
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  if (run_dirs.empty()) throw Error("no finished runs (report.json) under " + root.string());

  std::map<std::string, std::map<std::string, std::vector<fairmetrics::FairnessReport>>> by_method;
  json provenance_runs = json::array();
  for (const auto& dir : run_dirs) {
    const json cfg = read_json_file(dir / "config.json");
    const json rep = read_json_file(dir / "report.json");
    const std::string method = cfg.value("method", "baseline");
    for (const char* cohort : {"validation", "test"}) {
      if (rep.contains(cohort)) by_method[method][cohort].push_back(fairmetrics::report_from_json(rep.at(cohort)));
    }
    provenance_runs.push_back({{"run_dir", fs::relative(dir, ctx.workdir).string()},
                               {"run_id", rep.value("run_id", "")},
                               {"method", method},
                               {"seed", cfg.value("seed", 0)},
                               {"config_hash", hash_hex(cfg.dump())}});
  }

  json methods = json::object();
  std::map<std::string, fairmetrics::SeedSummary> test_summaries;
  for (const auto& [method, cohorts] : by_method) {
    json m = json::object();
    for (const auto& [cohort, reports] : cohorts) {
      json c{{"n_runs", reports.size()}};
      json per_run = json::array();
      for (const auto& r : reports) per_run.push_back(fairmetrics::to_json(r));
      c["runs"] = per_run;
      if (reports.size() >= 2) {
        const auto summary = fairmetrics::summarize_seeds(reports);
        c["summary"] = fairmetrics::to_json(summary);
        if (cohort == "test") test_summaries[method] = summary;
      }
      m[cohort] = c;
    }
    methods[method] = m;
  }

  json comparisons = json::array();
  if (test_summaries.count("baseline")) {
    for (const auto& [method, summary] : test_summaries) {
      if (method == "baseline") continue;
      for (const char* metric : {"eo", "auroc"}) {
        comparisons.push_back(analysis::compare_intervals(metric, "baseline", test_summaries.at("baseline").metrics.at(metric),
                                                          method, summary.metrics.at(metric)));
      }
    }
  }

  json artifacts = json::array();
  if (ctx.has("artifacts")) {
    for (const auto& a : ctx.cfg.at("artifacts")) {
      fs::path p = a.get<std::string>();
      if (p.is_relative()) p = ctx.workdir / p;
      if (!fs::exists(p)) throw Error("referenced artifact does not exist: " + p.string());
      artifacts.push_back(fs::relative(p, ctx.workdir).string());
    }
  }

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  const json bundle{{"methods", methods},
                    {"comparisons", comparisons},
                    {"significance_rule", "95% seed confidence intervals that do not overlap are reported as significant"},
                    {"artifacts", artifacts},
                    {"provenance", {{"runs", provenance_runs}, {"generated_at", stamp.str()}}}};
  const auto out = ctx.path("out", "report.json");
  write_json_file(out, bundle);
  std::cout << json{{"out", out.string()}, {"n_runs", run_dirs.size()}, {"comparisons", comparisons}}.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lesionattn: fairness-aware lesion classification with attention guidance"};
  app.require_subcommand(1);
  std::string workdir = ".";
  app.add_option("--workdir", workdir, "root for all relative paths")->capture_default_str();

  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "JSON config file; flags override its keys");
    return c;
  };

  auto& generate = add("generate", "write a synthetic dataset directory");
  for (const char* k : {"n_samples", "resolution", "lesion_signal_strength", "shortcut_strength", "context_dependence",
                        "group_label_correlation", "shortcut_amplitude", "seed", "out"}) {
    generate.flag(k, k);
  }

  auto& ingest = add("ingest", "convert HAM/BCN-style metadata and images into a dataset directory");
  ingest.flag("metadata", "metadata CSV (image_id, diagnosis|dx, sex, age)");
  ingest.flag("images", "image directory");
  ingest.flag("masks", "mask directory (optional)");
  ingest.flag("malignant", "ham, bcn or a comma-separated diagnosis list");
  ingest.flag("mask_provenance", "free-text source of the masks");
  ingest.flag("resolution", "output resolution");
  ingest.flag("out", "output dataset directory");

  auto& split = add("split", "stratified 60/20/20 split");
  split.flag("data", "dataset directory");
  split.flag("seed", "split seed");
  split.flag("ratios", "JSON list of three ratios");
  split.flag("out", "split JSON path");

  auto train_flags = [](Command& c) {
    for (const char* k : {"data", "split", "method", "learning_rate", "lambda_attn", "rho", "epochs",
                          "early_stop_patience", "batch_size", "seed", "stop_metric", "threshold"}) {
      c.flag(k, k);
    }
    c.flag("model.input_resolution", "model input resolution");
    c.flag("model.channels_per_block", "JSON list of residual block widths");
  };
  auto& train = add("train", "train one model into a resumable run directory");
  train_flags(train);
  train.flag("run_dir", "run directory");

  auto& gridsearch = add("gridsearch", "grid x seeds training, candidate CSV and best point");
  train_flags(gridsearch);
  gridsearch.flag("grid", "JSON object of parameter lists");
  gridsearch.flag("n_seeds", "seeds per grid point");
  gridsearch.flag("out", "output directory");

  auto& evaluate = add("evaluate", "fairness report for a checkpoint on one split subset");
  for (const char* k : {"checkpoint", "data", "split", "subset", "threshold", "bootstrap", "seed", "out"}) evaluate.flag(k, k);

  auto& select = add("select", "Pareto frontier and final model choice from a candidate CSV");
  select.flag("candidates", "candidate CSV");
  select.flag("policy", "knee, max_pred or max_fair");
  select.flag("out", "write candidates with on_frontier flags here");

  auto& attn = add("attn-audit", "attention/lesion IoU statistics and overlays");
  for (const char* k : {"checkpoint", "data", "split", "subset", "mode", "seed", "out"}) attn.flag(k, k);

  auto& plot = add("plot", "ROC and PR curves as CSV and PNG");
  for (const char* k : {"checkpoint", "data", "split", "subset", "predictions", "out"}) plot.flag(k, k);

  auto& report = add("report", "bundle run reports with seed intervals and comparisons");
  report.flag("runs", "root directory holding run directories");
  report.flag("artifacts", "JSON list of files to reference");
  report.flag("out", "bundle path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const std::map<std::string, int (*)(const Context&)> handlers{
      {"generate", cmd_generate}, {"ingest", cmd_ingest},     {"split", cmd_split},
      {"train", cmd_train},       {"gridsearch", cmd_gridsearch}, {"evaluate", cmd_evaluate},
      {"select", cmd_select},     {"attn-audit", cmd_attn_audit}, {"plot", cmd_plot},
      {"report", cmd_report}};

  std::string name;
  for (const auto& [n, c] : commands)
    if (c.app->parsed()) name = n;
  try {
    Context ctx{fs::absolute(workdir), commands.at(name).settings(fs::absolute(workdir))};
    return handlers.at(name)(ctx);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"command", name}}.dump() << '\n';
    return 1;
  }
}
