#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "werprobe/digest.hpp"
#include "werprobe/json_config.hpp"

namespace werprobe::cli {

using Json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return kExitConfig;
    case ErrorKind::Io: return kExitIo;
    case ErrorKind::Numeric: return kExitNumeric;
    default: return kExitData;
  }
}

// ---------------------------------------------------------------------------
// Run configuration

void RunConfig::apply_seed(std::uint64_t value) {
  seed = value;
  model.seed = value;
  train.seed = value;
  probe.seed = value;
  tsne.seed = value;
}

Json RunConfig::to_json() const {
  Json j{{"generator", werprobe::to_json(generator)},
         {"model", werprobe::to_json(model)},
         {"train", werprobe::to_json(train)},
         {"probe", werprobe::to_json(probe)},
         {"tsne", werprobe::to_json(tsne)},
         {"paths", {{"corpus", paths.corpus}, {"run", paths.run}}}};
  j["seed"] = seed ? Json(*seed) : Json(nullptr);
  return j;
}

std::string RunConfig::digest() const { return digest_of(canonical(to_json())); }

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorKind::Config, "run config: expected a JSON object");
  static const std::set<std::string> kSections{"generator", "model", "train", "probe", "tsne", "paths", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kSections.contains(it.key())) fail(ErrorKind::Config, "run config: unknown key '" + it.key() + "'");
  }
  RunConfig c;
  if (j.contains("generator")) c.generator = generator_config_from_json(j["generator"]);
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("probe")) c.probe = probe_config_from_json(j["probe"]);
  if (j.contains("tsne")) c.tsne = tsne_config_from_json(j["tsne"]);
  if (j.contains("paths")) {
    const Json& p = j["paths"];
    if (!p.is_object()) fail(ErrorKind::Config, "paths: expected a JSON object");
    for (auto it = p.begin(); it != p.end(); ++it) {
      if (it.key() != "corpus" && it.key() != "run") fail(ErrorKind::Config, "paths: unknown key '" + it.key() + "'");
      if (!it->is_string()) fail(ErrorKind::Config, "paths." + it.key() + " must be a string");
    }
    c.paths.corpus = p.value("corpus", c.paths.corpus);
    c.paths.run = p.value("run", c.paths.run);
  }
  if (j.contains("seed") && !j["seed"].is_null()) {
    if (!j["seed"].is_number_unsigned()) fail(ErrorKind::Config, "seed must be a non-negative integer");
    c.apply_seed(j["seed"].get<std::uint64_t>());
  }
  return c;
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
  if (path.empty()) return RunConfig{};
  const std::string text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string system_name(std::span<const Task> tasks) {
  std::string name = "WER";
  for (Task t : kAllTasks) {
    if (std::find(tasks.begin(), tasks.end(), t) != tasks.end()) name += "+" + std::string(to_string(t));
  }
  return name;
}

std::vector<ManifestEntry> default_manifest() {
  const std::vector<std::vector<Task>> sets{{},
                                            {Task::Show},
                                            {Task::Style},
                                            {Task::Accent},
                                            {Task::Style, Task::Accent},
                                            {Task::Show, Task::Accent},
                                            {Task::Show, Task::Style},
                                            {Task::Show, Task::Style, Task::Accent}};
  std::vector<ManifestEntry> out;
  for (const auto& s : sets) out.push_back({system_name(s), s});
  return out;
}

std::vector<ManifestEntry> parse_manifest(const Json& j) {
  if (!j.is_array() || j.empty()) fail(ErrorKind::Config, "manifest must be a non-empty array");
  std::vector<ManifestEntry> out;
  std::set<std::string> names;
  for (const Json& e : j) {
    if (!e.is_object()) fail(ErrorKind::Config, "manifest entries must be objects");
    for (auto it = e.begin(); it != e.end(); ++it) {
      if (it.key() != "name" && it.key() != "tasks") {
        fail(ErrorKind::Config, "manifest entry: unknown key '" + it.key() + "'");
      }
    }
    ManifestEntry m;
    try {
      for (const Json& t : e.at("tasks")) {
        const Task task = parse_task(t.get<std::string>());
        if (std::find(m.tasks.begin(), m.tasks.end(), task) != m.tasks.end()) {
          fail(ErrorKind::Config, "manifest entry lists a task twice");
        }
        m.tasks.push_back(task);
      }
      m.name = e.contains("name") ? e["name"].get<std::string>() : system_name(m.tasks);
    } catch (const Json::exception& ex) {
      fail(ErrorKind::Config, std::string("manifest: ") + ex.what());
    }
    if (!names.insert(m.name).second) fail(ErrorKind::Config, "manifest: duplicate system name '" + m.name + "'");
    out.push_back(std::move(m));
  }
  return out;
}

std::size_t thread_cap() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("WERPROBE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) cap = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, std::string("WERPROBE_THREADS='") + env + "' is not an integer");
    }
  }
  return cap;
}

// ---------------------------------------------------------------------------
// Formatting helpers

namespace {

std::string fixed(double v, int digits = 2) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string dev_test(double dev, double test) { return fixed(dev) + "||" + fixed(test); }

std::string pct(double v) { return std::isnan(v) ? "-" : fixed(100.0 * v); }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double task_accuracy(const MetricsReport& r, Task t) {
  const auto it = r.tasks.find(t);
  return it == r.tasks.end() ? kNaN : it->second.accuracy;
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension();
  return fs::path(p.string() + suffix);
}

void write_provenance(const fs::path& path, const std::string& command, const RunConfig& cfg,
                      const std::string& corpus_digest, const std::string& model_digest) {
  Json j{{"command", command}, {"run_config_digest", cfg.digest()}, {"corpus_config_digest", corpus_digest}};
  if (!model_digest.empty()) j["model_digest"] = model_digest;
  write_text(path, j.dump(2) + "\n");
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cell += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell += c;
      }
    }
    cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += "|";
    for (const std::string& c : rows[r]) out += " " + (c.empty() ? std::string("-") : c) + " |";
    out += "\n";
    if (r == 0) {
      out += "|";
      for (std::size_t k = 0; k < rows[0].size(); ++k) out += " --- |";
      out += "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
  std::string config, out, effects = "planted";
  std::optional<std::uint64_t> seed;
};

std::string label_distribution_csv(const Corpus& corpus) {
  std::string out = "category,label,TRAIN,DEV,TEST\n";
  for (Task task : kAllTasks) {
    std::set<std::string> labels;
    for (const Utterance& u : corpus.utterances) labels.insert(label_of(u, task));
    for (const std::string& l : labels) {
      out += std::string(to_string(task)) + "," + csv_escape(l);
      for (Split s : kAllSplits) {
        const auto counts = label_counts(corpus, task, s);
        const auto it = counts.find(l);
        out += "," + std::to_string(it == counts.end() ? 0 : it->second);
      }
      out += "\n";
    }
  }
  out += "WER,mean";
  for (Split s : kAllSplits) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const Utterance& u : corpus.utterances) {
      if (u.split == s) sum += u.wer, ++n;
    }
    out += "," + fixed(n ? sum / static_cast<double>(n) : kNaN);
  }
  out += "\n";
  return out;
}

std::string balanced_sizes_csv(const Corpus& corpus, std::uint64_t seed) {
  std::string out = "task,categories,TRAIN,DEV,TEST\n";
  for (Task task : kAllTasks) {
    std::vector<Split> splits{Split::Train, Split::Dev};
    if (task != Task::Show) splits.push_back(Split::Test);
    BalanceSpec spec;
    spec.task = task;
    spec.seed = seed;
    const Corpus b = balance_for_task(corpus, spec, splits);
    const auto train_counts = label_counts(b, task, Split::Train);
    out += std::string(to_string(task)) + "," + std::to_string(train_counts.size());
    for (Split s : kAllSplits) {
      const auto counts = label_counts(b, task, s);
      out += ",";
      if (!counts.empty()) out += std::to_string(counts.begin()->second) + "x" + std::to_string(counts.size());
    }
    out += "\n";
  }
  return out;
}

int cmd_gen(const GenOptions& o, std::ostream& out) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.generator.seed = *o.seed;
  if (o.effects == "zero") {
    cfg.generator = cfg.generator.without_effects();
  } else if (o.effects != "planted") {
    fail(ErrorKind::Config, "--effects must be 'planted' or 'zero'");
  }
  const fs::path dir = o.out.empty() ? fs::path(cfg.paths.corpus) : fs::path(o.out);
  const Corpus corpus = generate_synthetic_corpus(cfg.generator);
  save_corpus(corpus, dir);
  const std::string dist = label_distribution_csv(corpus);
  write_text(dir / "label_distribution.csv", dist);
  write_text(dir / "balanced_sizes.csv", balanced_sizes_csv(corpus, 11));
  write_provenance(dir / "provenance.json", "gen", cfg, corpus.metadata.config_digest, "");

  out << "corpus written to " << dir.string() << " (generator digest " << corpus.metadata.config_digest << ")\n\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-10s %-16s %8s %8s %8s\n", "Category", "Label", "TRAIN", "DEV", "TEST");
  out << buf;
  for (const auto& row : parse_csv(dist)) {
    if (row[0] == "category") continue;
    std::snprintf(buf, sizeof(buf), "%-10s %-16s %8s %8s %8s\n", row[0].c_str(), row[1].c_str(), row[2].c_str(),
                  row[3].c_str(), row[4].c_str());
    out << buf;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string config, corpus, out, tasks, manifest;
  bool manifest_given = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> task_weight;
};

struct SystemOutcome {
  std::string name;
  std::vector<Task> tasks;
  MetricsReport dev, test;
  PredictionSet predictions;
};

SystemOutcome train_system(const Corpus& corpus, const RunConfig& cfg, const std::vector<Task>& tasks,
                           const std::string& name, const fs::path& checkpoint) {
  const ModelConfig mc = model_config_for(corpus, tasks, cfg.model);
  const Model initial(mc);
  TrainResult result = train_prediction_model(initial, corpus, cfg.train);
  SystemOutcome o;
  o.name = name;
  o.tasks = tasks;
  o.dev = evaluate_model(result.model, corpus, Split::Dev);
  if (corpus.count(Split::Test) > 0) o.test = evaluate_model(result.model, corpus, Split::Test);
  o.predictions = o.dev.predictions;
  o.predictions.insert(o.predictions.end(), o.test.predictions.begin(), o.test.predictions.end());

  save_checkpoint(result.model, result.log, cfg.train.seed, checkpoint);
  write_text(with_suffix(checkpoint, ".log.csv"), result.log.to_csv());
  write_text(with_suffix(checkpoint, ".pred.csv"), prediction_csv(o.predictions));
  write_provenance(with_suffix(checkpoint, ".provenance.json"), "train " + name, cfg, corpus.metadata.config_digest,
                   result.model.digest());
  return o;
}

std::string metrics_line(const std::string& name, const MetricsReport& dev, const MetricsReport& test) {
  std::string line = name + "  MAE " + dev_test(dev.mae, test.count ? test.mae : kNaN) + "  Kendall " +
                     dev_test(100.0 * dev.kendall, test.count ? 100.0 * test.kendall : kNaN);
  for (Task t : kAllTasks) {
    const double d = task_accuracy(dev, t), e = test.count ? task_accuracy(test, t) : kNaN;
    if (!std::isnan(d)) line += "  " + std::string(to_string(t)) + " " + pct(d) + "||" + pct(e);
  }
  return line;
}

std::string table6_row(const std::string& name, const MetricsReport& dev, const MetricsReport& test) {
  std::string row = csv_escape(name) + "," + fixed(dev.mae, 4) + "," + fixed(test.count ? test.mae : kNaN, 4) + "," +
                    fixed(100.0 * dev.kendall, 4) + "," + fixed(test.count ? 100.0 * test.kendall : kNaN, 4);
  for (Task t : kAllTasks) {
    row += "," + pct(task_accuracy(dev, t)) + "," + pct(test.count ? task_accuracy(test, t) : kNaN);
  }
  for (std::size_t i = 0; i < row.size(); ++i) {
    // Missing metrics are blank cells in the CSV.
    if (row.compare(i, 2, ",-") == 0 && (i + 2 == row.size() || row[i + 2] == ',')) row.erase(i + 1, 1);
  }
  return row + "\n";
}

MetricsReport report_from_predictions(const PredictionSet& rows, Split split) {
  MetricsReport r;
  r.split = split;
  std::vector<double> p, t;
  for (const PredictionRow& row : rows) {
    if (row.split != split) continue;
    p.push_back(row.wer_pred);
    t.push_back(row.wer_true);
    r.predictions.push_back(row);
  }
  r.count = p.size();
  r.mae = kNaN;
  r.kendall = kNaN;
  if (p.empty()) return r;
  r.mae = mean_absolute_error(p, t);
  if (p.size() >= 2) {
    try {
      r.kendall = kendall_tau(t, p);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedCorrelation) throw;
    }
  }
  return r;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  if (o.task_weight) {
    if (!(*o.task_weight >= 0)) fail(ErrorKind::Config, "--task-weight must be >= 0");
    cfg.train.weights.task = *o.task_weight;
  }
  const std::vector<Task> tasks = parse_task_list(o.tasks);
  const Corpus corpus = load_corpus(o.corpus.empty() ? fs::path(cfg.paths.corpus) : fs::path(o.corpus));

  if (!o.manifest_given) {
    const fs::path ckpt = o.out.empty() ? fs::path(cfg.paths.run) / "train" / "model.ckpt" : fs::path(o.out);
    const SystemOutcome s = train_system(corpus, cfg, tasks, system_name(tasks), ckpt);
    out << "checkpoint " << ckpt.string() << "\n" << metrics_line(s.name, s.dev, s.test) << "\n";
    return kExitOk;
  }

  std::vector<ManifestEntry> manifest = default_manifest();
  if (!o.manifest.empty()) {
    Json j;
    try {
      j = Json::parse(read_text(o.manifest));
    } catch (const Json::parse_error& e) {
      fail(ErrorKind::Config, o.manifest + ": " + e.what());
    }
    manifest = parse_manifest(j);
  }
  const fs::path dir = o.out.empty() ? fs::path(cfg.paths.run) / "train" : fs::path(o.out);
  std::vector<std::optional<SystemOutcome>> outcomes(manifest.size());
  std::vector<std::exception_ptr> errors(manifest.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.size(); i = next++) {
      try {
        RunConfig local = cfg;
        local.model.seed = cfg.model.seed + i;
        local.train.seed = cfg.train.seed + i;
        outcomes[i] = train_system(corpus, local, manifest[i].tasks, manifest[i].name, dir / (manifest[i].name + ".ckpt"));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(thread_cap(), manifest.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::string table = "system,dev_mae,test_mae,dev_kendall,test_kendall,show_dev,show_test,style_dev,style_test,"
                      "accent_dev,accent_test\n";
  std::vector<PredictionSet> members;
  for (const auto& s : outcomes) {
    table += table6_row(s->name, s->dev, s->test);
    out << metrics_line(s->name, s->dev, s->test) << "\n";
    if (!s->tasks.empty()) members.push_back(s->predictions);
  }
  if (members.empty()) {
    for (const auto& s : outcomes) members.push_back(s->predictions);
  }
  const PredictionSet combined = combine_predictions(members);
  write_text(dir / "combined.pred.csv", prediction_csv(combined));
  const MetricsReport cdev = report_from_predictions(combined, Split::Dev);
  const MetricsReport ctest = report_from_predictions(combined, Split::Test);
  table += table6_row("ALL COMBINED", cdev, ctest);
  write_text(dir / "table6.csv", table);
  write_provenance(dir / "provenance.json", "train --manifest", cfg, corpus.metadata.config_digest, "");
  out << metrics_line("ALL COMBINED (" + std::to_string(members.size()) + " systems)", cdev, ctest) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeOptions {
  std::string config, corpus, checkpoint, out, tasks = "SHOW,STYLE,ACCENT", layers;
  bool random_model = false;
  std::optional<std::uint64_t> seed;
};

int cmd_probe(const ProbeOptions& o, std::ostream& out) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  const Corpus corpus = load_corpus(o.corpus.empty() ? fs::path(cfg.paths.corpus) : fs::path(o.corpus));
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const std::vector<Task> tasks = parse_task_list(o.tasks);
  if (tasks.empty()) fail(ErrorKind::Config, "--tasks must name at least one task");
  const std::vector<Layer> layers = parse_layer_list(o.layers);
  std::optional<Model> fresh;
  if (o.random_model) {
    ModelConfig mc = ckpt.model.config();
    mc.seed = mix_seed(mc.seed, 0x7A0D);
    fresh.emplace(mc);
  }
  const Model& model = fresh ? *fresh : ckpt.model;

  ProbeSuiteOptions opts;
  opts.probe = cfg.probe;
  const ProbeTable table = run_probe_suite(model, corpus, tasks, layers, opts);
  const fs::path dir = o.out.empty() ? fs::path(cfg.paths.run) / (o.random_model ? "probe_random" : "probe")
                                     : fs::path(o.out);
  write_text(dir / "probe_table.csv", table.to_csv());
  write_text(dir / "probe_table.txt", table.to_text());
  const Layer figure_layer =
      std::find(layers.begin(), layers.end(), Layer::C2) != layers.end() ? Layer::C2 : layers.back();
  for (const ProbeCell& c : table.cells) {
    const std::string stem = std::string(to_string(c.task)) + "_" + std::string(to_string(c.layer));
    write_text(dir / "confusion" / (stem + ".csv"), c.dev_confusion.to_csv());
    if (c.layer == figure_layer) {
      write_text(dir / ("confusion_" + stem + ".svg"),
                 heatmap_svg(c.dev_confusion, std::string(to_string(c.task)) + " confusion (DEV), layer " +
                                                  std::string(to_string(c.layer))));
    }
  }
  write_provenance(dir / "provenance.json", o.random_model ? "probe --random-model" : "probe", cfg,
                   corpus.metadata.config_digest, model.digest());
  out << table.to_text();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// tsne

struct TsneOptions {
  std::string config, corpus, checkpoint, out, layer = "C2", bucket = "0..inf", split = "DEV";
  std::optional<std::uint64_t> seed;
};

int cmd_tsne(const TsneOptions& o, std::ostream& out) {
  RunConfig cfg = load_run_config(o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  const Layer layer = parse_layer(o.layer);
  const auto [lo, hi] = parse_bucket(o.bucket);
  Split split;
  try {
    split = parse_split(o.split);
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  const Corpus corpus = load_corpus(o.corpus.empty() ? fs::path(cfg.paths.corpus) : fs::path(o.corpus));
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Corpus bucket = duration_bucket(corpus.only(split), lo, hi);
  if (bucket.utterances.size() < 4) {
    fail(ErrorKind::Data, "bucket " + o.bucket + " holds " + std::to_string(bucket.utterances.size()) +
                              " utterances of split " + o.split + " (need at least 4)");
  }
  const ActivationSet set = extract_activations(ckpt.model, bucket, layer, Task::Style);
  const TsneResult r = tsne_project(to_points(set), cfg.tsne);

  std::string csv = "id,x,y,label,duration\n";
  std::vector<ScatterPoint> points;
  std::vector<std::size_t> classes;
  for (std::size_t i = 0; i < set.rows(); ++i) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,", r.embedding(i, 0), r.embedding(i, 1));
    csv += set.ids[i] + buf + set.labels[i] + "," + fixed(bucket.utterances[i].duration, 4) + "\n";
    points.push_back({r.embedding(i, 0), r.embedding(i, 1), set.labels[i]});
    classes.push_back(set.labels[i] == "Spontaneous" ? 1 : 0);
  }
  const std::string stem = "tsne_" + std::string(to_string(layer)) + "_" + fixed(lo, 1) + "_" + fixed(hi, 1);
  const fs::path dir = o.out.empty() ? fs::path(cfg.paths.run) / "tsne" : fs::path(o.out);
  write_text(dir / (stem + ".csv"), csv);
  write_text(dir / (stem + ".svg"),
             scatter_svg(points, "t-SNE of " + std::string(to_string(layer)) + ", " + fixed(lo, 1) +
                                     "s <= D < " + fixed(hi, 1) + "s"));
  write_provenance(dir / (stem + ".provenance.json"), "tsne", cfg, corpus.metadata.config_digest,
                   ckpt.model.digest());
  out << stem << ": " << set.rows() << " utterances, perplexity " << fixed(r.perplexity) << ", KL "
      << fixed(r.kl_initial, 4) << " -> " << fixed(r.kl_final, 4);
  const std::set<std::size_t> distinct(classes.begin(), classes.end());
  if (distinct.size() == 2) out << ", style silhouette " << fixed(silhouette_score(r.embedding, classes), 3);
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// combine

struct CombineOptions {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_combine(const CombineOptions& o, std::ostream& out) {
  if (o.inputs.empty()) fail(ErrorKind::Config, "combine needs at least one prediction CSV");
  std::vector<PredictionSet> systems;
  for (const std::string& path : o.inputs) systems.push_back(parse_prediction_csv(read_text(path), path));
  const PredictionSet combined = combine_predictions(systems);
  if (!o.out.empty()) write_text(o.out, prediction_csv(combined));
  std::string csv = "system,split,n,mae,kendall\n";
  auto emit = [&](const std::string& name, const PredictionSet& rows) {
    for (Split s : kAllSplits) {
      const MetricsReport r = report_from_predictions(rows, s);
      if (r.count == 0) continue;
      csv += csv_escape(name) + "," + std::string(to_string(s)) + "," + std::to_string(r.count) + "," +
             fixed(r.mae, 4) + "," + fixed(100.0 * r.kendall, 4) + "\n";
      out << name << " " << to_string(s) << ": MAE " << fixed(r.mae) << ", Kendall " << fixed(100.0 * r.kendall)
          << "\n";
    }
  };
  for (std::size_t i = 0; i < systems.size(); ++i) emit(o.inputs[i], systems[i]);
  emit("combined", combined);
  if (!o.out.empty()) write_text(with_suffix(o.out, ".metrics.csv"), csv);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  std::string run;
};

std::string dev_test_cells_table(const std::vector<std::vector<std::string>>& rows) {
  // Pairs *_dev/*_test columns into single DEV||TEST cells.
  if (rows.empty()) return "";
  const auto& header = rows[0];
  std::vector<std::vector<std::string>> out;
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    for (std::size_t k = 0; k < header.size(); ++k) {
      const std::string& h = header[k];
      const std::string cell = k < row.size() ? row[k] : "";
      const bool is_dev = h.size() > 4 && h.compare(h.size() - 4, 4, "_dev") == 0;
      const bool paired = is_dev && k + 1 < header.size() &&
                          header[k + 1] == h.substr(0, h.size() - 4) + "_test";
      if (&row == &rows[0]) {
        cells.push_back(is_dev ? h.substr(0, h.size() - 4) : h);
      } else if (paired) {
        const std::string test = k + 1 < row.size() ? row[k + 1] : "";
        cells.push_back((cell.empty() ? "-" : cell) + "\\|\\|" + (test.empty() ? "-" : test));
      } else {
        cells.push_back(cell);
      }
      if (paired) ++k;
    }
    out.push_back(std::move(cells));
  }
  return markdown_table(out);
}

int cmd_report(const ReportOptions& o, std::ostream& out) {
  const fs::path run = o.run;
  const std::vector<fs::path> required{run / "corpus" / "label_distribution.csv", run / "corpus" / "balanced_sizes.csv",
                                       run / "probe" / "probe_table.csv", run / "train" / "table6.csv"};
  std::vector<std::string> missing;
  for (const fs::path& p : required) {
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing run artifacts:";
    for (const std::string& m : missing) msg += "\n  " + m;
    fail(ErrorKind::Data, msg);
  }
  std::string md = "# Run report\n\nValues are DEV||TEST where both splits apply.\n\n";

  md += "## Provenance\n\n";
  std::vector<fs::path> provenance;
  for (const auto& entry : fs::recursive_directory_iterator(run)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() >= 15 && name.compare(name.size() - 15, 15, "provenance.json") == 0) {
      provenance.push_back(entry.path());
    }
  }
  std::sort(provenance.begin(), provenance.end());
  std::vector<std::vector<std::string>> prov_rows{{"file", "command", "run config digest", "corpus digest"}};
  for (const fs::path& p : provenance) {
    const Json j = Json::parse(read_text(p), nullptr, false);
    if (j.is_discarded()) continue;
    prov_rows.push_back({fs::relative(p, run).string(), j.value("command", ""), j.value("run_config_digest", ""),
                         j.value("corpus_config_digest", "")});
  }
  md += markdown_table(prov_rows) + "\n";

  md += "## Label distribution\n\n" + markdown_table(parse_csv(read_text(required[0]))) + "\n";
  md += "## Balanced subsets\n\n" + markdown_table(parse_csv(read_text(required[1]))) + "\n";
  md += "## Probe accuracies (%)\n\n" + dev_test_cells_table(parse_csv(read_text(required[2]))) + "\n";
  if (fs::exists(run / "probe_random" / "probe_table.csv")) {
    md += "## Probe accuracies, randomly initialized model (%)\n\n" +
          dev_test_cells_table(parse_csv(read_text(run / "probe_random" / "probe_table.csv"))) + "\n";
  }
  md += "## Multi-task systems\n\n" + dev_test_cells_table(parse_csv(read_text(required[3]))) + "\n";

  std::vector<std::string> figures;
  for (const auto& entry : fs::recursive_directory_iterator(run)) {
    if (entry.is_regular_file() && entry.path().extension() == ".svg") {
      figures.push_back(fs::relative(entry.path(), run).string());
    }
  }
  std::sort(figures.begin(), figures.end());
  if (!figures.empty()) {
    md += "## Figures\n\n";
    for (const std::string& f : figures) md += "- [" + f + "](" + f + ")\n";
    md += "\n";
  }
  write_text(run / "report.md", md);
  out << "report written to " << (run / "report.md").string() << "\n";
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"werprobe: WER prediction, probing and analysis on synthetic speech corpora"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic corpus");
  g->add_option("--config", gen.config, "Run configuration JSON");
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--effects", gen.effects, "planted or zero")->check(CLI::IsMember({"planted", "zero"}));
  g->add_option("--out", gen.out, "Corpus directory");

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a WER prediction model (or a manifest of systems)");
  t->add_option("--config", train.config, "Run configuration JSON");
  t->add_option("--corpus", train.corpus, "Corpus directory");
  t->add_option("--seed", train.seed, "Seed for model and training");
  t->add_option("--tasks", train.tasks, "Auxiliary tasks (comma-separated SHOW,STYLE,ACCENT)");
  t->add_option("--task-weight", train.task_weight, "Weight of the auxiliary losses");
  t->add_option("--manifest", train.manifest, "Train every system of a manifest (default: all 8 systems)")
      ->expected(0, 1);
  t->add_option("--out", train.out, "Checkpoint path (directory with --manifest)");

  ProbeOptions probe;
  auto* p = app.add_subcommand("probe", "Run probing classifiers on hidden layers");
  p->add_option("--config", probe.config, "Run configuration JSON");
  p->add_option("--corpus", probe.corpus, "Corpus directory");
  p->add_option("--checkpoint", probe.checkpoint, "Model checkpoint")->required();
  p->add_option("--seed", probe.seed, "Probe seed");
  p->add_option("--tasks", probe.tasks, "Probe tasks");
  p->add_option("--layers", probe.layers, "Layers (default: all nine)");
  p->add_flag("--random-model", probe.random_model, "Probe a freshly initialized model instead");
  p->add_option("--out", probe.out, "Output directory");

  TsneOptions tsne;
  auto* s = app.add_subcommand("tsne", "Project a layer's representations with t-SNE");
  s->add_option("--config", tsne.config, "Run configuration JSON");
  s->add_option("--corpus", tsne.corpus, "Corpus directory");
  s->add_option("--checkpoint", tsne.checkpoint, "Model checkpoint")->required();
  s->add_option("--seed", tsne.seed, "t-SNE seed");
  s->add_option("--layers", tsne.layer, "Layer to project (default C2)");
  s->add_option("--bucket", tsne.bucket, "Duration bucket LO..HI in seconds");
  s->add_option("--split", tsne.split, "Split to project (default DEV)");
  s->add_option("--out", tsne.out, "Output directory");

  CombineOptions combine;
  auto* c = app.add_subcommand("combine", "Average per-utterance predictions across systems");
  c->add_option("inputs", combine.inputs, "Prediction CSVs")->required();
  c->add_option("--out", combine.out, "Combined prediction CSV");

  ReportOptions report;
  auto* r = app.add_subcommand("report", "Collate run artifacts into a markdown report");
  r->add_option("--out,run", report.run, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  train.manifest_given = t->count("--manifest") > 0;

  try {
    if (*g) return cmd_gen(gen, out);
    if (*t) return cmd_train(train, out);
    if (*p) return cmd_probe(probe, out);
    if (*s) return cmd_tsne(tsne, out);
    if (*c) return cmd_combine(combine, out);
    if (*r) return cmd_report(report, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace werprobe::cli
