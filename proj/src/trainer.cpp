#include "werprobe/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "werprobe/error.hpp"
#include "werprobe/json_config.hpp"
#include "werprobe/rng.hpp"

WERPROBE_NAMESPACE_BEGIN

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "adadelta"; }

OptimizerKind parse_optimizer_kind(std::string_view text) {
  if (text == "adam") return OptimizerKind::Adam;
  if (text == "adadelta") return OptimizerKind::Adadelta;
  fail(ErrorKind::Config, "unknown optimizer '" + std::string(text) + "' (adam, adadelta)");
}

std::string_view to_string(SelectionMetric metric) {
  return metric == SelectionMetric::DevMae ? "dev_mae" : "dev_accuracy";
}

SelectionMetric parse_selection_metric(std::string_view text) {
  if (text == "dev_mae") return SelectionMetric::DevMae;
  if (text == "dev_accuracy") return SelectionMetric::DevAccuracy;
  fail(ErrorKind::Config, "unknown selection metric '" + std::string(text) + "' (dev_mae, dev_accuracy)");
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::Config, "train.epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::Config, "train.batch_size must be >= 1");
  if (!(weights.main >= 0) || !(weights.task >= 0)) fail(ErrorKind::Config, "train loss weights must be >= 0");
}

double EpochRecord::dev_accuracy(Task task) const {
  switch (task) {
    case Task::Show: return dev_acc_show;
    case Task::Style: return dev_acc_style;
    case Task::Accent: return dev_acc_accent;
  }
  return kNaN;
}

namespace {

double& accuracy_slot(EpochRecord& r, Task task) {
  switch (task) {
    case Task::Show: return r.dev_acc_show;
    case Task::Style: return r.dev_acc_style;
    case Task::Accent: return r.dev_acc_accent;
  }
  return r.dev_acc_show;
}

EpochRecord blank_record(std::size_t epoch) {
  EpochRecord r;
  r.epoch = epoch;
  r.dev_mae = r.dev_kendall = r.dev_acc_show = r.dev_acc_style = r.dev_acc_accent = kNaN;
  return r;
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_csv_number(const std::string& s, const std::string& where) {
  if (s.empty()) return kNaN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::Parse, where + ": bad number '" + s + "'");
  return v;
}

constexpr const char* kLogHeader = "epoch,train_loss,dev_mae,dev_kendall,dev_acc_show,dev_acc_style,dev_acc_accent,selected";

}  // namespace

const EpochRecord& TrainLog::selected() const {
  for (const EpochRecord& r : epochs) {
    if (r.selected) return r;
  }
  fail(ErrorKind::Data, "train log has no selected epoch");
}

std::string TrainLog::to_csv() const {
  std::string out = std::string(kLogHeader) + "\n";
  for (const EpochRecord& r : epochs) {
    out += std::to_string(r.epoch) + "," + csv_number(r.train_loss) + "," + csv_number(r.dev_mae) + "," +
           csv_number(r.dev_kendall) + "," + csv_number(r.dev_acc_show) + "," + csv_number(r.dev_acc_style) + "," +
           csv_number(r.dev_acc_accent) + "," + (r.selected ? "1" : "0") + "\n";
  }
  return out;
}

TrainLog TrainLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader) fail(ErrorKind::Parse, "train log: missing header");
  TrainLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "train log line " + std::to_string(line_no);
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 8) fail(ErrorKind::Parse, where + ": expected 8 fields");
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_csv_number(f[0], where));
    r.train_loss = parse_csv_number(f[1], where);
    r.dev_mae = parse_csv_number(f[2], where);
    r.dev_kendall = parse_csv_number(f[3], where);
    r.dev_acc_show = parse_csv_number(f[4], where);
    r.dev_acc_style = parse_csv_number(f[5], where);
    r.dev_acc_accent = parse_csv_number(f[6], where);
    if (f[7] != "0" && f[7] != "1") fail(ErrorKind::Parse, where + ": selected must be 0 or 1");
    r.selected = f[7] == "1";
    log.epochs.push_back(r);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

std::size_t argmax(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

}  // namespace

MetricsReport evaluate_model(const Model& model, const Corpus& corpus, Split split) {
  const ModelConfig& cfg = model.config();
  MetricsReport report;
  report.split = split;
  std::vector<double> pred, truth;
  std::vector<std::vector<std::string>> task_truth(cfg.tasks.size()), task_pred(cfg.tasks.size());
  for (const Utterance& u : corpus.utterances) {
    if (u.split != split) continue;
    Graph g(false);
    const ForwardResult fr = forward_utterance(g, model, u);
    const double w = g.value(fr.wer).item();
    pred.push_back(w);
    truth.push_back(u.wer);
    report.predictions.push_back({u.id, split, u.wer, w});
    for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
      const TaskHead& head = cfg.tasks[t];
      const std::string label = label_of(u, head.task);
      if (!head.index_of(label)) continue;
      task_truth[t].push_back(label);
      task_pred[t].push_back(head.labels[argmax(g.value(fr.head.task_logits[t]))]);
    }
  }
  if (pred.empty()) fail(ErrorKind::EmptyBatch, "evaluate_model: split " + std::string(to_string(split)) + " is empty");
  report.count = pred.size();
  report.mae = mean_absolute_error(pred, truth);
  report.kendall = kNaN;
  if (pred.size() >= 2) {
    try {
      report.kendall = kendall_tau(truth, pred);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedCorrelation) throw;
    }
  }
  for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
    if (task_truth[t].empty()) continue;
    TaskMetrics m;
    m.confusion = confusion_matrix(task_truth[t], task_pred[t], cfg.tasks[t].labels);
    m.accuracy = m.confusion.accuracy();
    m.evaluated = task_truth[t].size();
    report.tasks[cfg.tasks[t].task] = std::move(m);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Prediction-model training

namespace {

Optimizer make_optimizer(const ParameterSet& params, const TrainConfig& config) {
  return config.optimizer == OptimizerKind::Adam ? Optimizer::adam(params, config.adam)
                                                 : Optimizer::adadelta(params, config.adadelta);
}

}  // namespace

TrainResult train_prediction_model(const Model& initial, const Corpus& corpus, const TrainConfig& config,
                                   const StepObserver& observer) {
  config.validate();
  const Corpus train = corpus.only(Split::Train);
  const Corpus dev = corpus.only(Split::Dev);
  if (train.utterances.empty()) fail(ErrorKind::Data, "training corpus has no TRAIN utterances");
  if (dev.utterances.empty()) fail(ErrorKind::Data, "training corpus has no DEV utterances");

  Model model = initial;
  const ModelConfig& cfg = model.config();
  const std::size_t n = train.utterances.size();

  std::vector<std::vector<std::size_t>> labels(cfg.tasks.size(), std::vector<std::size_t>(n));
  for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string label = label_of(train.utterances[i], cfg.tasks[t].task);
      const auto idx = cfg.tasks[t].index_of(label);
      if (!idx) {
        fail(ErrorKind::Label, "utterance '" + train.utterances[i].id + "' has " +
                                   std::string(to_string(cfg.tasks[t].task)) + " label '" + label +
                                   "' unknown to the head");
      }
      labels[t][i] = *idx;
    }
  }

  Optimizer optimizer = make_optimizer(model.parameters(), config);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainLog log;
  ParameterSet best = model.parameters();
  std::size_t best_index = 0;
  double best_metric = 0.0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) {
      Rng rng(mix_seed(config.seed, epoch));
      rng.shuffle(std::span(order));
    }
    double loss_total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      Graph g;
      std::vector<Var> preds;
      std::vector<double> truth;
      std::vector<TaskBatch> tasks(cfg.tasks.size());
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const ForwardResult fr = forward_utterance(g, model, train.utterances[i]);
        preds.push_back(fr.wer);
        truth.push_back(train.utterances[i].wer);
        for (std::size_t t = 0; t < tasks.size(); ++t) {
          tasks[t].logits.push_back(fr.head.task_logits[t]);
          tasks[t].labels.push_back(labels[t][i]);
        }
      }
      const Var loss = composite_loss(g, preds, truth, tasks, config.weights);
      const double value = g.value(loss).item();
      if (!std::isfinite(value)) {
        fail(ErrorKind::Numeric, "non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(step + 1));
      }
      g.backward(loss);
      g.write_gradients(model.parameters());
      optimizer.step(model.parameters());
      ++step;
      if (!model.parameters().all_finite()) {
        fail(ErrorKind::Numeric, "non-finite parameters after step " + std::to_string(step));
      }
      loss_total += value * static_cast<double>(end - start);
      if (observer) observer(step, model, value);
    }

    EpochRecord rec = blank_record(epoch);
    rec.train_loss = loss_total / static_cast<double>(n);
    const MetricsReport report = evaluate_model(model, dev, Split::Dev);
    rec.dev_mae = report.mae;
    rec.dev_kendall = report.kendall;
    double acc_sum = 0.0;
    std::size_t acc_n = 0;
    for (const auto& [task, m] : report.tasks) {
      accuracy_slot(rec, task) = m.accuracy;
      acc_sum += m.accuracy;
      ++acc_n;
    }
    double metric = rec.dev_mae;
    if (config.selection == SelectionMetric::DevAccuracy) {
      if (acc_n == 0) fail(ErrorKind::Config, "dev_accuracy selection needs at least one task head");
      metric = -acc_sum / static_cast<double>(acc_n);
    }
    if (epoch == 1 || metric < best_metric) {
      best_metric = metric;
      best_index = log.epochs.size();
      best = model.parameters();
    }
    log.epochs.push_back(rec);
  }
  log.epochs[best_index].selected = true;
  for (Parameter& p : best.all()) p.gradient = Tensor(p.value.shape());
  return TrainResult{Model(model.config(), std::move(best)), std::move(log)};
}

// ---------------------------------------------------------------------------
// Probe training

ProbeTrainResult train_probe(const ActivationSet& train, const ActivationSet& dev, const ProbeConfig& config,
                             Task task) {
  config.validate();
  train.validate();
  dev.validate();
  if (train.dim != dev.dim) {
    fail(ErrorKind::Dimension, "train_probe: TRAIN activations have width " + std::to_string(train.dim) +
                                   ", DEV " + std::to_string(dev.dim));
  }
  if (train.rows() == 0 || dev.rows() == 0) fail(ErrorKind::EmptyBatch, "train_probe: empty activation set");
  const std::set<std::string> label_set(train.labels.begin(), train.labels.end());
  std::vector<std::string> labels(label_set.begin(), label_set.end());
  if (labels.size() < 2) fail(ErrorKind::Label, "train_probe: TRAIN activations carry fewer than 2 labels");
  for (const std::string& l : dev.labels) {
    if (!label_set.contains(l)) fail(ErrorKind::Label, "train_probe: DEV label '" + l + "' absent from TRAIN");
  }

  Probe probe(train.dim, labels, config);
  std::vector<std::size_t> targets(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) targets[i] = *probe.label_index(train.labels[i]);

  Optimizer optimizer = Optimizer::adam(probe.parameters(), config.adam);
  Rng dropout_rng(mix_seed(config.seed, 0xD80F));
  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  ParameterSet best = probe.parameters();
  double best_acc = -1.0;
  std::size_t best_index = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, epoch));
    shuffle_rng.shuffle(std::span(order));
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Graph g;
      std::vector<Var> losses;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto row = train.row(i);
        const Var x = g.constant(Tensor({train.dim}, std::vector<Real>(row.begin(), row.end())));
        losses.push_back(softmax_cross_entropy(g, probe.logits(g, x, true, dropout_rng), targets[i]));
      }
      const Var loss = mean(g, losses);
      const double value = g.value(loss).item();
      if (!std::isfinite(value)) fail(ErrorKind::Numeric, "non-finite probe loss at epoch " + std::to_string(epoch));
      g.backward(loss);
      g.write_gradients(probe.parameters());
      optimizer.step(probe.parameters());
      loss_total += value * static_cast<double>(end - start);
    }
    EpochRecord rec = blank_record(epoch);
    rec.train_loss = loss_total / static_cast<double>(order.size());
    const double acc = probe_accuracy(probe, dev);
    accuracy_slot(rec, task) = acc;
    if (acc > best_acc) {
      best_acc = acc;
      best_index = log.epochs.size();
      best = probe.parameters();
    }
    log.epochs.push_back(rec);
  }
  log.epochs[best_index].selected = true;
  Probe selected(train.dim, labels, config);
  for (std::size_t i = 0; i < best.size(); ++i) selected.parameters().all()[i].value = best.all()[i].value;
  return ProbeTrainResult{std::move(selected), std::move(log), best_acc};
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'W', 'P', 'R', 'B'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::Format, std::string("checkpoint truncated reading ") + what + " at byte " +
                                  std::to_string(pos_));
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto v = static_cast<std::uint16_t>(byte(0) | (byte(1) << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(byte(b)) << (8 * b);
    pos_ += 4;
    return v;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::uint32_t byte(std::size_t k) const { return static_cast<unsigned char>(bytes_[pos_ + k]); }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Model& model, const TrainLog& log, std::uint64_t train_seed) {
  Json meta;
  meta["model_config"] = to_json(model.config());
  meta["parameter_count"] = model.parameter_count();
  meta["train_seed"] = train_seed;
  meta["train_log"] = to_json(log);
  const std::string meta_text = canonical(meta);

  std::string out(kMagic, 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  const auto params = model.parameters().all();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (Real v : p.value.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  ByteReader in(bytes);
  if (in.take(4, "magic") != std::string(kMagic, 4)) fail(ErrorKind::Format, "not a checkpoint (bad magic)");
  const std::uint16_t version = in.u16("version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(version) + " (supported: " +
                                            std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t meta_len = in.u32("metadata length");
  const Json meta = parse_json(in.take(meta_len, "metadata"), "checkpoint metadata");
  ModelConfig config;
  TrainLog log;
  std::uint64_t seed = 0, count = 0;
  try {
    config = model_config_from_json(meta.at("model_config"));
    log = train_log_from_json(meta.at("train_log"));
    seed = meta.at("train_seed").get<std::uint64_t>();
    count = meta.at("parameter_count").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint metadata: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("checkpoint metadata: ") + e.what());
  }
  ParameterSet params;
  const std::uint32_t records = in.u32("record count");
  for (std::uint32_t r = 0; r < records; ++r) {
    const std::uint32_t name_len = in.u32("name length");
    std::string name = in.take(name_len, "parameter name");
    const std::uint32_t rank = in.u32("rank");
    if (rank == 0 || rank > 8) fail(ErrorKind::Format, "parameter '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t elems = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(in.u32("dimension"));
      elems *= shape.back();
    }
    if (elems == 0) fail(ErrorKind::Format, "parameter '" + name + "' has an empty dimension");
    in.need(elems * 4, "parameter values");
    std::vector<Real> values(elems);
    for (std::uint64_t i = 0; i < elems; ++i) values[i] = static_cast<Real>(std::bit_cast<float>(in.u32("value")));
    params.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!in.done()) fail(ErrorKind::Format, "trailing bytes after checkpoint at offset " + std::to_string(in.pos()));
  if (params.scalar_count() != count) {
    fail(ErrorKind::Format, "checkpoint holds " + std::to_string(params.scalar_count()) +
                                " values, metadata says " + std::to_string(count));
  }
  return Checkpoint{Model(std::move(config), std::move(params)), std::move(log), seed};
}

void save_checkpoint(const Model& model, const TrainLog& log, std::uint64_t train_seed,
                     const std::filesystem::path& path) {
  const std::string bytes = checkpoint_bytes(model, log, train_seed);
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

WERPROBE_NAMESPACE_END
