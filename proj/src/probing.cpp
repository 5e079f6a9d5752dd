#include "werprobe/probing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "werprobe/digest.hpp"
#include "werprobe/error.hpp"
#include "werprobe/rng.hpp"
#include "werprobe/trainer.hpp"

WERPROBE_NAMESPACE_BEGIN

void ActivationSet::validate() const {
  if (dim == 0) fail(ErrorKind::Dimension, "activation set has width 0");
  if (values.size() != ids.size() * dim || labels.size() != ids.size()) {
    fail(ErrorKind::Dimension, "activation set: " + std::to_string(values.size()) + " values, " +
                                   std::to_string(labels.size()) + " labels and " + std::to_string(ids.size()) +
                                   " ids do not agree for width " + std::to_string(dim));
  }
}

std::vector<ActivationSet> extract_activations(const Model& model, const Corpus& corpus, std::span<const Layer> layers,
                                               Task task) {
  const std::string digest = model.digest();
  std::vector<ActivationSet> sets;
  for (Layer l : layers) {
    ActivationSet s;
    s.layer = l;
    s.dim = model.config().layers.width(l);
    s.source_model_digest = digest;
    s.values.reserve(corpus.utterances.size() * s.dim);
    sets.push_back(std::move(s));
  }
  for (const Utterance& u : corpus.utterances) {
    Graph g(false);
    const ForwardResult fr = forward_utterance(g, model, u);
    const std::string label = label_of(u, task);
    for (ActivationSet& s : sets) {
      const Tensor& v = g.value(fr.layer(s.layer));
      if (v.size() != s.dim) {
        fail(ErrorKind::Dimension, "layer " + std::string(to_string(s.layer)) + " emitted " +
                                       std::to_string(v.size()) + " values, expected " + std::to_string(s.dim));
      }
      s.values.insert(s.values.end(), v.values().begin(), v.values().end());
      s.labels.push_back(label);
      s.ids.push_back(u.id);
    }
  }
  return sets;
}

ActivationSet extract_activations(const Model& model, const Corpus& corpus, Layer layer, Task task) {
  const std::array<Layer, 1> one{layer};
  return std::move(extract_activations(model, corpus, one, task).front());
}

PointMatrix to_points(const ActivationSet& set) {
  set.validate();
  PointMatrix m{set.rows(), set.dim, std::vector<double>(set.values.begin(), set.values.end())};
  return m;
}

void save_activations(const ActivationSet& set, const std::filesystem::path& dir) {
  set.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  Json meta{{"format", "werprobe-activations"},
            {"version", 1},
            {"layer", to_string(set.layer)},
            {"dim", set.dim},
            {"rows", set.rows()},
            {"source_model_digest", set.source_model_digest}};
  std::ofstream m(dir / "meta.json", std::ios::binary);
  m << meta.dump(2) << '\n';
  std::ofstream bin(dir / "activations.bin", std::ios::binary);
  std::string bytes;
  bytes.reserve(set.values.size() * 4);
  for (Real v : set.values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  bin.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ofstream labels(dir / "labels.csv", std::ios::binary);
  labels << "id,label\n";
  for (std::size_t i = 0; i < set.rows(); ++i) labels << set.ids[i] << ',' << set.labels[i] << '\n';
  if (!m || !bin || !labels) fail(ErrorKind::Io, "failed writing activations in " + dir.string());
}

ActivationSet load_activations(const std::filesystem::path& dir) {
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const Json meta = parse_json(read(dir / "meta.json"), (dir / "meta.json").string());
  ActivationSet set;
  std::size_t rows = 0;
  try {
    if (meta.at("format").get<std::string>() != "werprobe-activations") {
      fail(ErrorKind::Format, "meta.json: not an activation set");
    }
    if (meta.at("version").get<int>() != 1) fail(ErrorKind::UnsupportedVersion, "activation set version");
    set.layer = parse_layer(meta.at("layer").get<std::string>());
    set.dim = meta.at("dim").get<std::size_t>();
    rows = meta.at("rows").get<std::size_t>();
    set.source_model_digest = meta.at("source_model_digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("activation meta.json: ") + e.what());
  }
  const std::string raw = read(dir / "activations.bin");
  if (raw.size() != rows * set.dim * 4) {
    fail(ErrorKind::Parse, "activations.bin holds " + std::to_string(raw.size()) + " bytes, expected " +
                               std::to_string(rows * set.dim * 4));
  }
  set.values.resize(rows * set.dim);
  for (std::size_t i = 0; i < set.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + b])) << (8 * b);
    set.values[i] = static_cast<Real>(std::bit_cast<float>(bits));
  }
  std::istringstream labels(read(dir / "labels.csv"));
  std::string line;
  std::getline(labels, line);
  if (line != "id,label") fail(ErrorKind::Parse, "labels.csv: missing header");
  std::size_t line_no = 1;
  while (std::getline(labels, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorKind::Parse, "labels.csv line " + std::to_string(line_no) + ": no comma");
    set.ids.push_back(line.substr(0, comma));
    set.labels.push_back(line.substr(comma + 1));
  }
  if (set.ids.size() != rows) fail(ErrorKind::Parse, "labels.csv row count differs from meta.json");
  return set;
}

// ---------------------------------------------------------------------------
// Probe

void ProbeConfig::validate() const {
  if (hidden_size < 1) fail(ErrorKind::Config, "probe.hidden_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(ErrorKind::Config, "probe.dropout_rate must lie in [0, 1)");
  if (epochs < 1) fail(ErrorKind::Config, "probe.epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::Config, "probe.batch_size must be >= 1");
}

namespace {

Tensor glorot(Shape shape, std::uint64_t seed, const std::string& name) {
  Tensor t(shape);
  const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  Rng rng(mix_seed(seed, hash64(name)));
  for (Real& v : t.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace

Probe::Probe(std::size_t input_dim, std::vector<std::string> labels, const ProbeConfig& config)
    : input_dim_(input_dim), labels_(std::move(labels)), config_(config) {
  config_.validate();
  if (input_dim_ < 1) fail(ErrorKind::Dimension, "probe input width must be >= 1");
  if (labels_.size() < 2) fail(ErrorKind::Label, "probe needs at least 2 classes");
  const std::size_t h = config_.hidden_size, k = labels_.size();
  params_.add("probe.hidden.weight", glorot({h, input_dim_}, config_.seed, "probe.hidden.weight"));
  params_.add("probe.hidden.bias", Tensor({h}));
  params_.add("probe.output.weight", glorot({k, h}, config_.seed, "probe.output.weight"));
  params_.add("probe.output.bias", Tensor({k}));
}

Var Probe::logits(Graph& g, Var input, bool training, Rng& rng) const {
  const Var hidden = dense(g, input, g.parameter(params_.at("probe.hidden.weight")),
                           g.parameter(params_.at("probe.hidden.bias")));
  const Var active = relu(g, dropout(g, hidden, config_.dropout_rate, training, rng));
  return dense(g, active, g.parameter(params_.at("probe.output.weight")), g.parameter(params_.at("probe.output.bias")));
}

std::vector<double> Probe::probabilities(std::span<const Real> row) const {
  if (row.size() != input_dim_) {
    fail(ErrorKind::Dimension, "probe expects width " + std::to_string(input_dim_) + ", got " +
                                   std::to_string(row.size()));
  }
  Graph g(false);
  Rng unused(0);
  const Var z = logits(g, g.constant(Tensor({input_dim_}, std::vector<Real>(row.begin(), row.end()))), false, unused);
  const Tensor& t = g.value(z);
  const double top = *std::max_element(t.values().begin(), t.values().end());
  std::vector<double> p(t.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) sum += p[i] = std::exp(static_cast<double>(t[i]) - top);
  for (double& v : p) v /= sum;
  return p;
}

std::size_t Probe::predict(std::span<const Real> row) const {
  const auto p = probabilities(row);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::optional<std::size_t> Probe::label_index(const std::string& label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

Probe build_probe(std::size_t input_dim, std::vector<std::string> labels, const ProbeConfig& config) {
  return Probe(input_dim, std::move(labels), config);
}

double probe_accuracy(const Probe& probe, const ActivationSet& set) {
  set.validate();
  if (set.rows() == 0) fail(ErrorKind::EmptyBatch, "probe_accuracy: empty activation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.rows(); ++i) {
    if (probe.labels()[probe.predict(set.row(i))] == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.rows());
}

ConfusionMatrix probe_confusion(const Probe& probe, const ActivationSet& set) {
  std::vector<std::string> predicted;
  for (std::size_t i = 0; i < set.rows(); ++i) predicted.push_back(probe.labels()[probe.predict(set.row(i))]);
  return confusion_matrix(set.labels, predicted, probe.labels());
}

// ---------------------------------------------------------------------------
// Suite

double chance_accuracy(std::size_t n_classes) { return n_classes == 0 ? 0.0 : 1.0 / static_cast<double>(n_classes); }

const ProbeCell& ProbeTable::cell(Task task, Layer layer) const {
  for (const ProbeCell& c : cells) {
    if (c.task == task && c.layer == layer) return c;
  }
  fail(ErrorKind::Config, "probe table has no cell for " + std::string(to_string(task)) + "/" +
                              std::string(to_string(layer)));
}

namespace {

std::string_view input_group(Layer l) {
  switch (l) {
    case Layer::A1:
    case Layer::A2:
    case Layer::A3: return "TXT";
    case Layer::B1:
    case Layer::B2:
    case Layer::B3:
    case Layer::B4: return "RAW-SIG";
    default: return "TXT+RAW-SIG";
  }
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

bool has_test_column(Task t) { return t != Task::Show; }

std::size_t class_count(const ProbeTable& table, Task t) {
  for (const ProbeCell& c : table.cells) {
    if (c.task == t) return c.dev_confusion.labels.size();
  }
  return t == Task::Show ? 5 : 2;
}

}  // namespace

std::string ProbeTable::to_csv() const {
  std::string out = "input,layer,dim";
  for (Task t : tasks) {
    out += "," + std::string(to_string(t)) + "_dev";
    if (has_test_column(t)) out += "," + std::string(to_string(t)) + "_test";
  }
  out += "\n";
  for (Layer l : layers) {
    out += std::string(input_group(l)) + "," + std::string(to_string(l)) + ",";
    bool first = true;
    for (Task t : tasks) {
      const ProbeCell& c = cell(t, l);
      if (first) out += std::to_string(c.dim), first = false;
      out += "," + percent(c.dev_accuracy);
      if (has_test_column(t)) out += "," + (c.test_accuracy ? percent(*c.test_accuracy) : std::string());
    }
    if (tasks.empty()) out += "-";
    out += "\n";
  }
  out += "Random,-,-";
  for (Task t : tasks) {
    const std::string chance = percent(chance_accuracy(class_count(*this, t)));
    out += "," + chance;
    if (has_test_column(t)) out += "," + chance;
  }
  out += "\n";
  return out;
}

std::string ProbeTable::to_text() const {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-12s %-6s %5s", "Input", "Layer", "Dim");
  out << buf;
  for (Task t : tasks) {
    std::snprintf(buf, sizeof(buf), " %16s", std::string(to_string(t)).c_str());
    out << buf;
  }
  out << "\n";
  for (Layer l : layers) {
    std::snprintf(buf, sizeof(buf), "%-12s %-6s %5zu", std::string(input_group(l)).c_str(),
                  std::string(to_string(l)).c_str(), tasks.empty() ? 0 : cell(tasks.front(), l).dim);
    out << buf;
    for (Task t : tasks) {
      const ProbeCell& c = cell(t, l);
      const std::string v = percent(c.dev_accuracy) + "||" + (c.test_accuracy ? percent(*c.test_accuracy) : "-");
      std::snprintf(buf, sizeof(buf), " %16s", v.c_str());
      out << buf;
    }
    out << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%-12s %-6s %5s", "Random", "-", "-");
  out << buf;
  for (Task t : tasks) {
    std::snprintf(buf, sizeof(buf), " %16s", percent(chance_accuracy(class_count(*this, t))).c_str());
    out << buf;
  }
  out << "\n";
  return out.str();
}

ProbeTable run_probe_suite(const Model& model, const Corpus& corpus, std::span<const Task> tasks,
                           std::span<const Layer> layers, const ProbeSuiteOptions& options) {
  options.probe.validate();
  ProbeTable table;
  table.tasks.assign(tasks.begin(), tasks.end());
  table.layers.assign(layers.begin(), layers.end());
  table.model_digest = model.digest();
  for (Task task : tasks) {
    std::vector<Split> splits{Split::Train, Split::Dev};
    if (has_test_column(task)) splits.push_back(Split::Test);
    BalanceSpec spec;
    spec.task = task;
    spec.seed = options.balance_seed;
    const Corpus balanced = balance_for_task(corpus, spec, splits);
    const auto train = extract_activations(model, balanced.only(Split::Train), layers, task);
    const auto dev = extract_activations(model, balanced.only(Split::Dev), layers, task);
    std::vector<ActivationSet> test;
    if (has_test_column(task)) test = extract_activations(model, balanced.only(Split::Test), layers, task);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      ProbeTrainResult r = train_probe(train[li], dev[li], options.probe, task);
      ProbeCell c;
      c.task = task;
      c.layer = layers[li];
      c.dim = train[li].dim;
      c.dev_accuracy = r.dev_accuracy;
      c.n_train = train[li].rows();
      c.n_dev = dev[li].rows();
      c.dev_confusion = probe_confusion(r.probe, dev[li]);
      if (!test.empty()) {
        c.n_test = test[li].rows();
        c.test_accuracy = probe_accuracy(r.probe, test[li]);
      }
      table.cells.push_back(std::move(c));
    }
  }
  return table;
}

WERPROBE_NAMESPACE_END
