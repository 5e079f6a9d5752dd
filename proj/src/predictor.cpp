#include "werprobe/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "werprobe/digest.hpp"
#include "werprobe/error.hpp"
#include "werprobe/rng.hpp"

WERPROBE_NAMESPACE_BEGIN

std::string_view to_string(Layer layer) {
  static constexpr std::array<std::string_view, 9> kNames{"A1", "A2", "A3", "B1", "B2", "B3", "B4", "C1", "C2"};
  return kNames[static_cast<std::size_t>(layer)];
}

Layer parse_layer(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Layer l : kAllLayers) {
    if (upper == to_string(l)) return l;
  }
  fail(ErrorKind::Config, "unknown layer '" + std::string(text) + "' (valid: A1,A2,A3,B1,B2,B3,B4,C1,C2)");
}

std::vector<Layer> parse_layer_list(std::string_view text) {
  if (text.empty()) return {kAllLayers.begin(), kAllLayers.end()};
  std::vector<Layer> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, comma - start);
    if (!item.empty()) {
      const Layer l = parse_layer(item);
      if (std::find(out.begin(), out.end(), l) != out.end()) {
        fail(ErrorKind::Config, "layer '" + std::string(item) + "' listed twice");
      }
      out.push_back(l);
    }
    start = comma + 1;
  }
  return out;
}

LayerSpec LayerSpec::reference_scale() { return {1280, 256, 128, 512, 512, 256, 128, 256, 128}; }

LayerSpec LayerSpec::desk_scale() {
  const LayerSpec p = reference_scale();
  auto s = [](std::size_t w) { return std::max<std::size_t>(16, w / 8); };
  return {s(p.a1), s(p.a2), s(p.a3), s(p.b1), s(p.b2), s(p.b3), s(p.b4), s(p.c1), s(p.c2)};
}

std::size_t LayerSpec::width(Layer layer) const {
  switch (layer) {
    case Layer::A1: return a1;
    case Layer::A2: return a2;
    case Layer::A3: return a3;
    case Layer::B1: return b1;
    case Layer::B2: return b2;
    case Layer::B3: return b3;
    case Layer::B4: return b4;
    case Layer::C1: return c1;
    case Layer::C2: return c2;
  }
  return 0;
}

void LayerSpec::validate() const {
  for (Layer l : kAllLayers) {
    if (width(l) == 0) fail(ErrorKind::Config, "layer " + std::string(to_string(l)) + " has width 0");
  }
  if (c1 != a3 + b4) {
    fail(ErrorKind::Config, "C1 (" + std::to_string(c1) + ") must equal A3 + B4 (" + std::to_string(a3 + b4) + ")");
  }
}

WerVector WerVector::uniform(double lo, double step, std::size_t n) {
  WerVector v;
  for (std::size_t i = 0; i < n; ++i) v.centers.push_back(lo + step * static_cast<double>(i));
  return v;
}

void WerVector::validate(double wer_max) const {
  if (centers.empty()) fail(ErrorKind::Config, "WER vector is empty");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!(centers[i] >= 0.0 && centers[i] <= wer_max)) {
      fail(ErrorKind::Config, "WER vector center " + std::to_string(centers[i]) + " outside [0, wer_max]");
    }
    if (i > 0 && !(centers[i] > centers[i - 1])) fail(ErrorKind::Config, "WER vector must be strictly ascending");
  }
}

std::optional<std::size_t> TaskHead::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  return std::nullopt;
}

std::string_view to_string(BranchAblation ablation) {
  switch (ablation) {
    case BranchAblation::None: return "none";
    case BranchAblation::Text: return "text";
    case BranchAblation::Signal: return "signal";
  }
  return "?";
}

BranchAblation parse_branch_ablation(std::string_view text) {
  for (BranchAblation a : {BranchAblation::None, BranchAblation::Text, BranchAblation::Signal}) {
    if (text == to_string(a)) return a;
  }
  fail(ErrorKind::Config, "unknown branch ablation '" + std::string(text) + "' (none, text, signal)");
}

std::size_t ModelConfig::filters_per_width() const {
  return text.filter_widths.empty() ? 0 : layers.a1 / text.filter_widths.size();
}

void ModelConfig::validate() const {
  layers.validate();
  wer_vector.validate(1e9);
  if (text.vocab_size < 2) fail(ErrorKind::Config, "text.vocab_size must be >= 2");
  if (text.max_tokens < 1 || text.embed_dim < 1) fail(ErrorKind::Config, "text dimensions must be >= 1");
  if (text.filter_widths.empty()) fail(ErrorKind::Config, "text.filter_widths is empty");
  if (layers.a1 % text.filter_widths.size() != 0) {
    fail(ErrorKind::Config, "A1 (" + std::to_string(layers.a1) + ") is not divisible by the number of filter widths (" +
                                std::to_string(text.filter_widths.size()) + ")");
  }
  for (std::size_t w : text.filter_widths) {
    if (w < 1 || w > text.max_tokens) fail(ErrorKind::Config, "filter width " + std::to_string(w) + " out of range");
  }
  if (signal.stages.empty()) fail(ErrorKind::Config, "signal.stages is empty");
  std::size_t len = signal.input_len;
  for (std::size_t i = 0; i < signal.stages.size(); ++i) {
    const ConvStage& s = signal.stages[i];
    const std::string where = "signal stage " + std::to_string(i);
    if (s.channels < 1 || s.kernel < 1 || s.stride < 1) fail(ErrorKind::Config, where + ": sizes must be >= 1");
    if (s.kernel > len) fail(ErrorKind::Config, where + ": kernel exceeds input length " + std::to_string(len));
    len = (len - s.kernel) / s.stride + 1;
    const bool last = i + 1 == signal.stages.size();
    if (last) {
      if (s.pool != 0) fail(ErrorKind::Config, where + ": last stage must use global average pooling (pool 0)");
      if (s.channels != layers.b1) {
        fail(ErrorKind::Config, "last signal stage has " + std::to_string(s.channels) + " channels but B1 is " +
                                    std::to_string(layers.b1));
      }
    } else if (s.pool > 1) {
      if (s.pool > len) fail(ErrorKind::Config, where + ": pool width exceeds length " + std::to_string(len));
      len = (len - s.pool) / s.pool + 1;
    }
  }
  std::set<Task> seen;
  for (const TaskHead& h : tasks) {
    if (!seen.insert(h.task).second) fail(ErrorKind::Config, "task head listed twice");
    if (h.classes() < 2) fail(ErrorKind::Config, std::string(to_string(h.task)) + " head needs >= 2 classes");
  }
}

const TaskHead* ModelConfig::head(Task task) const {
  for (const TaskHead& h : tasks) {
    if (h.task == task) return &h;
  }
  return nullptr;
}

TaskHead make_task_head(const Corpus& corpus, Task task) {
  TaskHead h;
  h.task = task;
  switch (task) {
    case Task::Style: h.labels = {"NonSpontaneous", "Spontaneous"}; break;
    case Task::Accent: h.labels = {"Native", "NonNative"}; break;
    case Task::Show:
      for (const auto& [label, n] : label_counts(corpus, Task::Show, Split::Train)) h.labels.push_back(label);
      break;
  }
  return h;
}

ModelConfig model_config_for(const Corpus& corpus, std::span<const Task> tasks, ModelConfig base) {
  base.text.vocab_size = corpus.vocabulary.size();
  base.tasks.clear();
  for (Task t : tasks) base.tasks.push_back(make_task_head(corpus, t));
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

struct ParamShape {
  std::string name;
  Shape shape;
  enum class Init { Glorot, Zero, Embedding } init;
  std::size_t fan_in = 0, fan_out = 0;
};

std::string text_conv_name(std::size_t w) { return "text.conv" + std::to_string(w); }
std::string signal_conv_name(std::size_t i) { return "signal.conv" + std::to_string(i); }
std::string head_name(Task t) {
  std::string s(to_string(t));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return "head." + s;
}

void add_dense(std::vector<ParamShape>& out, const std::string& name, std::size_t n_in, std::size_t n_out) {
  out.push_back({name + ".weight", {n_out, n_in}, ParamShape::Init::Glorot, n_in, n_out});
  out.push_back({name + ".bias", {n_out}, ParamShape::Init::Zero});
}

std::vector<ParamShape> parameter_shapes(const ModelConfig& c) {
  std::vector<ParamShape> out;
  out.push_back({"text.embedding", {c.text.vocab_size, c.text.embed_dim}, ParamShape::Init::Embedding});
  const std::size_t f = c.filters_per_width();
  for (std::size_t w : c.text.filter_widths) {
    const std::string n = text_conv_name(w);
    out.push_back({n + ".kernel", {f, c.text.embed_dim, w}, ParamShape::Init::Glorot, c.text.embed_dim * w, f * w});
    out.push_back({n + ".bias", {f}, ParamShape::Init::Zero});
  }
  add_dense(out, "text.a2", c.layers.a1, c.layers.a2);
  add_dense(out, "text.a3", c.layers.a2, c.layers.a3);
  std::size_t c_in = 1;
  for (std::size_t i = 0; i < c.signal.stages.size(); ++i) {
    const ConvStage& s = c.signal.stages[i];
    const std::string n = signal_conv_name(i);
    out.push_back({n + ".kernel", {s.channels, c_in, s.kernel}, ParamShape::Init::Glorot, c_in * s.kernel,
                   s.channels * s.kernel});
    out.push_back({n + ".bias", {s.channels}, ParamShape::Init::Zero});
    c_in = s.channels;
  }
  add_dense(out, "signal.b2", c.layers.b1, c.layers.b2);
  add_dense(out, "signal.b3", c.layers.b2, c.layers.b3);
  add_dense(out, "signal.b4", c.layers.b3, c.layers.b4);
  add_dense(out, "fusion.c2", c.layers.c1, c.layers.c2);
  add_dense(out, "head.wer", c.layers.c2, c.wer_vector.centers.size());
  for (const TaskHead& h : c.tasks) add_dense(out, head_name(h.task), c.layers.c2, h.classes());
  return out;
}

Tensor initial_value(const ParamShape& p, std::uint64_t seed) {
  Tensor t(p.shape);
  // Each parameter draws from its own stream, so adding heads leaves the
  // shared parameters untouched.
  Rng rng(mix_seed(seed, hash64(p.name)));
  switch (p.init) {
    case ParamShape::Init::Zero: break;
    case ParamShape::Init::Glorot: {
      const double limit = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
      for (Real& v : t.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
      break;
    }
    case ParamShape::Init::Embedding: {
      const std::size_t d = p.shape[1];
      for (std::size_t i = d; i < t.size(); ++i) t[i] = static_cast<Real>(rng.uniform(-0.05, 0.05));
      break;
    }
  }
  return t;
}

}  // namespace

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const ParamShape& p : parameter_shapes(config)) n += element_count(p.shape);
  return n;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const ParamShape& p : parameter_shapes(config_)) params_.add(p.name, initial_value(p, config_.seed));
}

Model::Model(ModelConfig config, ParameterSet parameters) : config_(std::move(config)), params_(std::move(parameters)) {
  config_.validate();
  const auto shapes = parameter_shapes(config_);
  if (shapes.size() != params_.size()) {
    fail(ErrorKind::Format, "model has " + std::to_string(params_.size()) + " parameters, config expects " +
                                std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Parameter& p = params_.all()[i];
    if (p.name != shapes[i].name || p.value.shape() != shapes[i].shape) {
      fail(ErrorKind::Format, "parameter '" + p.name + "' " + to_string(p.value.shape()) + " does not match '" +
                                  shapes[i].name + "' " + to_string(shapes[i].shape));
    }
  }
}

// ---------------------------------------------------------------------------
// Forward

Var ForwardResult::layer(Layer layer) const {
  switch (layer) {
    case Layer::A1: return text.a1;
    case Layer::A2: return text.a2;
    case Layer::A3: return text.a3;
    case Layer::B1: return signal.b1;
    case Layer::B2: return signal.b2;
    case Layer::B3: return signal.b3;
    case Layer::B4: return signal.b4;
    case Layer::C1: return head.c1;
    case Layer::C2: return head.c2;
  }
  return {};
}

namespace {

Var bind_param(Graph& g, const Model& m, const std::string& name) { return g.parameter(m.parameters().at(name)); }

Var dense_relu(Graph& g, const Model& m, const std::string& name, Var x) {
  return relu(g, dense(g, x, bind_param(g, m, name + ".weight"), bind_param(g, m, name + ".bias")));
}

}  // namespace

TextActivations text_encoder_forward(Graph& g, const Model& model, Var text_matrix) {
  const ModelConfig& c = model.config();
  const Tensor& x = g.value(text_matrix);
  if (x.shape() != Shape{c.text.max_tokens, c.text.embed_dim}) {
    fail(ErrorKind::Dimension, "text encoder: input " + to_string(x.shape()) + ", expected " +
                                   to_string(Shape{c.text.max_tokens, c.text.embed_dim}));
  }
  const Var channels = transpose(g, text_matrix);  // [embed_dim x max_tokens]
  std::vector<Var> pooled;
  for (std::size_t w : c.text.filter_widths) {
    const std::string n = text_conv_name(w);
    const Var conv = conv1d(g, channels, bind_param(g, model, n + ".kernel"), bind_param(g, model, n + ".bias"), 1);
    pooled.push_back(global_max_pool(g, relu(g, conv)));
  }
  TextActivations a;
  a.a1 = concat(g, pooled);
  a.a2 = dense_relu(g, model, "text.a2", a.a1);
  a.a3 = dense_relu(g, model, "text.a3", a.a2);
  return a;
}

SignalActivations signal_encoder_forward(Graph& g, const Model& model, Var signal) {
  const ModelConfig& c = model.config();
  const Tensor& x = g.value(signal);
  if (x.shape() != Shape{1, c.signal.input_len}) {
    fail(ErrorKind::Dimension, "signal encoder: input " + to_string(x.shape()) + ", expected " +
                                   to_string(Shape{1, c.signal.input_len}));
  }
  Var h = signal;
  for (std::size_t i = 0; i < c.signal.stages.size(); ++i) {
    const ConvStage& s = c.signal.stages[i];
    const std::string n = signal_conv_name(i);
    h = relu(g, conv1d(g, h, bind_param(g, model, n + ".kernel"), bind_param(g, model, n + ".bias"), s.stride));
    if (i + 1 == c.signal.stages.size()) {
      h = global_avg_pool(g, h);
    } else if (s.pool > 1) {
      h = maxpool1d(g, h, s.pool, s.pool);
    }
  }
  SignalActivations b;
  b.b1 = h;
  b.b2 = dense_relu(g, model, "signal.b2", b.b1);
  b.b3 = dense_relu(g, model, "signal.b3", b.b2);
  b.b4 = dense_relu(g, model, "signal.b4", b.b3);
  return b;
}

HeadOutputs fuse_and_head(Graph& g, const Model& model, Var a3, Var b4) {
  const ModelConfig& c = model.config();
  if (g.value(a3).shape() != Shape{c.layers.a3} || g.value(b4).shape() != Shape{c.layers.b4}) {
    fail(ErrorKind::Dimension, "fusion: A3 " + to_string(g.value(a3).shape()) + " and B4 " +
                                   to_string(g.value(b4).shape()) + " do not match the layer spec");
  }
  Var text = a3, sig = b4;
  if (c.ablation == BranchAblation::Text) text = g.constant(Tensor({c.layers.a3}));
  if (c.ablation == BranchAblation::Signal) sig = g.constant(Tensor({c.layers.b4}));
  HeadOutputs h;
  const std::array<Var, 2> parts{text, sig};
  h.c1 = concat(g, parts);
  h.c2 = dense_relu(g, model, "fusion.c2", h.c1);
  h.wer_logits = dense(g, h.c2, bind_param(g, model, "head.wer.weight"), bind_param(g, model, "head.wer.bias"));
  for (const TaskHead& t : c.tasks) {
    const std::string n = head_name(t.task);
    h.task_logits.push_back(dense(g, h.c2, bind_param(g, model, n + ".weight"), bind_param(g, model, n + ".bias")));
  }
  return h;
}

ForwardResult forward_utterance(Graph& g, const Model& model, const Utterance& utt) {
  const ModelConfig& c = model.config();
  ForwardResult r;
  const Var table = bind_param(g, model, "text.embedding");
  r.text = text_encoder_forward(g, model, embedding(g, table, utt.tokens, c.text.max_tokens));
  const std::vector<float> padded = pad_or_truncate_signal(utt.signal, c.signal.input_len);
  r.signal = signal_encoder_forward(
      g, model, g.constant(Tensor({1, c.signal.input_len}, std::vector<Real>(padded.begin(), padded.end()))));
  r.head = fuse_and_head(g, model, r.text.a3, r.signal.b4);
  r.wer = predict_wer(g, r.head.wer_logits, c.wer_vector);
  return r;
}

double predict_wer(std::span<const double> logits, const WerVector& wer_vector) {
  if (logits.size() != wer_vector.centers.size()) {
    fail(ErrorKind::Dimension, "predict_wer: " + std::to_string(logits.size()) + " logits for " +
                                   std::to_string(wer_vector.centers.size()) + " centers");
  }
  if (logits.empty()) fail(ErrorKind::Dimension, "predict_wer: no logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0, weighted = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double e = std::exp(logits[k] - top);
    z += e;
    weighted += e * wer_vector.centers[k];
  }
  const double lo = wer_vector.centers.front(), hi = wer_vector.centers.back();
  return std::clamp(weighted / z, lo, hi);
}

Var predict_wer(Graph& g, Var logits, const WerVector& wer_vector) {
  if (g.value(logits).size() != wer_vector.centers.size()) {
    fail(ErrorKind::Dimension, "predict_wer: " + std::to_string(g.value(logits).size()) + " logits for " +
                                   std::to_string(wer_vector.centers.size()) + " centers");
  }
  // Fused softmax expectation evaluated in double: value sum_k p_k c_k,
  // gradient p_k (c_k - value).
  const Tensor& z = g.value(logits);
  const std::vector<double> centers = wer_vector.centers;
  const double top = *std::max_element(z.values().begin(), z.values().end());
  std::vector<double> p(z.size());
  double norm = 0.0, weighted = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(static_cast<double>(z[k]) - top);
    norm += p[k];
    weighted += p[k] * centers[k];
  }
  for (double& v : p) v /= norm;
  const double value = std::clamp(weighted / norm, centers.front(), centers.back());
  return g.emit(Tensor::scalar(static_cast<Real>(value)), {logits},
                [=, p = std::move(p)](Graph& g, const Tensor& go) {
                  Tensor& gz = g.grad_buffer(logits);
                  for (std::size_t k = 0; k < p.size(); ++k) {
                    gz[k] += static_cast<Real>(static_cast<double>(go[0]) * p[k] * (centers[k] - value));
                  }
                });
}

Var composite_loss(Graph& g, std::span<const Var> wer_pred, std::span<const double> wer_true,
                   std::span<const TaskBatch> tasks, const LossWeights& weights) {
  Var loss = mae_loss(g, wer_pred, wer_true);
  if (weights.main != 1.0) loss = scale(g, loss, weights.main);
  if (tasks.empty()) return loss;
  std::vector<Var> task_terms;
  for (const TaskBatch& t : tasks) {
    if (t.logits.size() != wer_pred.size() || t.labels.size() != wer_pred.size()) {
      fail(ErrorKind::Label, "composite_loss: task batch has " + std::to_string(t.labels.size()) +
                                 " labels for " + std::to_string(wer_pred.size()) + " items");
    }
    std::vector<Var> ce;
    for (std::size_t i = 0; i < t.logits.size(); ++i) ce.push_back(softmax_cross_entropy(g, t.logits[i], t.labels[i]));
    task_terms.push_back(mean(g, ce));
  }
  Var total = task_terms.front();
  for (std::size_t i = 1; i < task_terms.size(); ++i) total = add(g, total, task_terms[i]);
  return add(g, loss, scale(g, total, weights.task));
}

double combine_losses(double mae, std::span<const double> task_ce, const LossWeights& weights) {
  double ce = 0.0;
  for (double v : task_ce) ce += v;
  return weights.main * mae + weights.task * ce;
}

WERPROBE_NAMESPACE_END
