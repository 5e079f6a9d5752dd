#include <gtest/gtest.h>

#include <cmath>

#include "werprobe/corpus.hpp"
#include "werprobe/error.hpp"
#include "werprobe/predictor.hpp"

namespace {

using namespace werprobe;

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::Config;
}

const Corpus& small_corpus() {
  static const Corpus c = [] {
    GeneratorConfig g;
    g.n_train = 40;
    g.n_dev = 10;
    g.n_test = 10;
    return generate_synthetic_corpus(g);
  }();
  return c;
}

ModelConfig config_with(std::vector<Task> tasks) { return model_config_for(small_corpus(), tasks); }

TEST(PredictWer, UniformLogitsGiveCenterMean) {
  const WerVector v = WerVector::standard();
  ASSERT_EQ(v.centers.size(), 51u);
  EXPECT_EQ(v.centers.back(), 150.0);
  EXPECT_EQ(predict_wer(std::vector<double>(51, 0.0), v), 75.0);
  EXPECT_EQ(predict_wer(std::vector<double>(51, 123.0), v), 75.0);
}

TEST(PredictWer, ExtremeLogitsStayInRange) {
  const WerVector v = WerVector::standard();
  for (std::size_t k : {std::size_t{0}, std::size_t{17}, std::size_t{50}}) {
    std::vector<double> hi(51, -1000.0), lo(51, 1000.0);
    hi[k] = 1000.0;
    lo[k] = -1000.0;
    const double a = predict_wer(hi, v), b = predict_wer(lo, v);
    EXPECT_TRUE(std::isfinite(a) && std::isfinite(b));
    EXPECT_NEAR(a, v.centers[k], 1e-9);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 150.0);
  }
}

TEST(PredictWer, GraphFormMatchesScalarForm) {
  const WerVector v = WerVector::uniform(0, 10, 6);
  const std::vector<double> z{0.3, -1.0, 2.0, 0.1, 0.0, -0.4};
  Graph g;
  Tensor t({6});
  for (std::size_t i = 0; i < 6; ++i) t[i] = static_cast<Real>(z[i]);
  const Var w = predict_wer(g, g.constant(t), v);
  EXPECT_NEAR(g.value(w)[0], predict_wer(z, v), 1e-5);
  EXPECT_EQ(kind_of([&] { predict_wer(std::vector<double>(5, 0.0), v); }), ErrorKind::Dimension);
}

TEST(PredictWer, DegenerateAndSymmetricCases) {
  std::vector<double> hot(51, -1000.0);
  hot[10] = 1000.0;
  EXPECT_EQ(predict_wer(hot, WerVector::standard()), 30.0);
  EXPECT_EQ(predict_wer(std::vector<double>(11, 0.5), WerVector::uniform(0, 10, 11)), 50.0);
  const std::vector<double> z{1, 2, 3};
  long double num = 0, den = 0;
  for (int k = 0; k < 3; ++k) {
    num += std::exp(static_cast<long double>(z[k])) * 50.0L * k;
    den += std::exp(static_cast<long double>(z[k]));
  }
  EXPECT_NEAR(predict_wer(z, WerVector{{0, 50, 100}}), static_cast<double>(num / den), 1e-5);
}

TEST(Loss, CompositeCombination) {
  const std::vector<double> ce{0.7, 0.6};
  EXPECT_NEAR(combine_losses(10.0, ce), 10.39, 1e-12);
  EXPECT_EQ(combine_losses(10.0, {}), 10.0);
  EXPECT_NEAR(combine_losses(10.0, ce, LossWeights{2.0, 0.5}), 20.65, 1e-12);
}

TEST(Loss, GraphCompositeMatchesHandValue) {
  Graph g;
  const std::vector<Var> pred{g.constant(Tensor::scalar(10)), g.constant(Tensor::scalar(30))};
  const std::vector<double> truth{14.0, 26.0};
  Tensor even({2}), skew({2});
  skew[0] = 1.0;
  const TaskBatch task{{g.constant(even), g.constant(skew)}, {0, 1}};
  const std::vector<TaskBatch> tasks{task};
  const Var loss = composite_loss(g, pred, truth, tasks);
  const double ce0 = std::log(2.0), ce1 = std::log(1.0 + std::exp(1.0));
  EXPECT_NEAR(g.value(loss)[0], 4.0 + 0.3 * 0.5 * (ce0 + ce1), 1e-5);
  const Var mono = composite_loss(g, pred, truth, {});
  EXPECT_NEAR(g.value(mono)[0], 4.0, 1e-6);
  const TaskBatch short_batch{{g.constant(even)}, {0}};
  const std::vector<TaskBatch> bad{short_batch};
  EXPECT_EQ(kind_of([&] { composite_loss(g, pred, truth, bad); }), ErrorKind::Label);
}

TEST(Layers, DeskScaleIsReferenceOverEight) {
  const LayerSpec p = LayerSpec::reference_scale(), d = LayerSpec::desk_scale();
  for (Layer l : kAllLayers) EXPECT_EQ(d.width(l), std::max<std::size_t>(16, p.width(l) / 8)) << to_string(l);
  EXPECT_EQ(d, LayerSpec{});
  EXPECT_EQ(p.c1, p.a3 + p.b4);
  LayerSpec bad = d;
  bad.c1 = 10;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::Config);
  EXPECT_EQ(parse_layer_list("C2,A1"), (std::vector<Layer>{Layer::C2, Layer::A1}));
  EXPECT_EQ(parse_layer_list("").size(), 9u);
  EXPECT_EQ(kind_of([] { parse_layer("D1"); }), ErrorKind::Config);
}

TEST(Config, ValidationCatchesBadShapes) {
  ModelConfig c = config_with({Task::Style});
  c.text.filter_widths = {1, 2, 3};
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
  c = config_with({Task::Style});
  c.signal.stages.back().pool = 2;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
  c = config_with({Task::Style});
  c.signal.stages.back().channels = 8;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
  c = config_with({Task::Style});
  c.wer_vector.centers = {0, 5, 5};
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
  c = config_with({Task::Style});
  c.tasks.push_back(c.tasks.front());
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
}

std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }

TEST(Model, ParameterCountMatchesHandCount) {
  const ModelConfig c = config_with({Task::Show, Task::Style, Task::Accent});
  std::size_t n = c.text.vocab_size * c.text.embed_dim;
  const std::size_t f = c.layers.a1 / c.text.filter_widths.size();
  for (std::size_t w : c.text.filter_widths) n += f * c.text.embed_dim * w + f;
  n += dense_count(c.layers.a1, c.layers.a2) + dense_count(c.layers.a2, c.layers.a3);
  std::size_t ch = 1;
  for (const ConvStage& s : c.signal.stages) {
    n += s.channels * ch * s.kernel + s.channels;
    ch = s.channels;
  }
  n += dense_count(c.layers.b1, c.layers.b2) + dense_count(c.layers.b2, c.layers.b3) +
       dense_count(c.layers.b3, c.layers.b4) + dense_count(c.layers.c1, c.layers.c2) +
       dense_count(c.layers.c2, 51);
  n += dense_count(c.layers.c2, 6) + dense_count(c.layers.c2, 2) * 2;
  EXPECT_EQ(parameter_count(c), n);
  EXPECT_EQ(Model(c).parameter_count(), n);
}

TEST(Model, InitializationIsSeededPerParameter) {
  const ModelConfig mono = config_with({});
  const Model a(mono), b(mono);
  EXPECT_EQ(a.digest(), b.digest());
  ModelConfig reseeded = mono;
  reseeded.seed = 99;
  EXPECT_NE(a.digest(), Model(reseeded).digest());
  const Model multi(config_with({Task::Style, Task::Accent}));
  for (const Parameter& p : a.parameters().all()) {
    EXPECT_EQ(p.value, multi.parameters().at(p.name).value) << p.name;
  }
  const Tensor& emb = a.parameters().at("text.embedding").value;
  for (std::size_t j = 0; j < emb.dim(1); ++j) EXPECT_EQ(emb.at(0, j), 0);
}

TEST(Model, WrappingChecksNamesAndShapes) {
  const ModelConfig c = config_with({Task::Style});
  const Model m(c);
  EXPECT_NO_THROW(Model(c, m.parameters()));
  EXPECT_EQ(kind_of([&] { Model(config_with({Task::Accent}), m.parameters()); }), ErrorKind::Format);
  EXPECT_EQ(kind_of([&] { Model(config_with({}), m.parameters()); }), ErrorKind::Format);
}

TEST(Forward, LayerShapesAndRange) {
  const ModelConfig c = config_with({Task::Show, Task::Style});
  const Model m(c);
  const Utterance& u = small_corpus().utterances.front();
  Graph g(false);
  const ForwardResult r = forward_utterance(g, m, u);
  for (Layer l : kAllLayers) EXPECT_EQ(g.value(r.layer(l)).size(), c.layers.width(l)) << to_string(l);
  const double w = g.value(r.wer)[0];
  EXPECT_GE(w, 0.0);
  EXPECT_LE(w, 150.0);
  ASSERT_EQ(r.head.task_logits.size(), 2u);
  EXPECT_EQ(g.value(r.head.task_logits[0]).size(), c.tasks[0].classes());
  Graph g2(false);
  EXPECT_EQ(g2.value(forward_utterance(g2, m, u).wer)[0], w);
}

TEST(Forward, TextAblationIgnoresTokens) {
  ModelConfig c = config_with({});
  c.ablation = BranchAblation::Text;
  const Model m(c);
  Utterance u = small_corpus().utterances.front();
  Graph g1(false), g2(false);
  const double w1 = g1.value(forward_utterance(g1, m, u).wer)[0];
  for (auto& t : u.tokens) t = 1 + (t + 5) % static_cast<std::uint32_t>(c.text.vocab_size - 1);
  const double w2 = g2.value(forward_utterance(g2, m, u).wer)[0];
  EXPECT_EQ(w1, w2);
  EXPECT_EQ(parse_branch_ablation("signal"), BranchAblation::Signal);
  EXPECT_EQ(kind_of([] { parse_branch_ablation("both"); }), ErrorKind::Config);
}

TEST(Forward, ZeroTextParametersGiveZeroA1) {
  Model m(config_with({}));
  for (Parameter& p : m.parameters().all()) {
    if (p.name.rfind("text.", 0) == 0) p.value.fill(0);
  }
  Graph g(false);
  const Utterance& u = small_corpus().utterances.front();
  const ForwardResult r = forward_utterance(g, m, u);
  for (Real v : g.value(r.text.a1).values()) EXPECT_EQ(v, 0);
}

TEST(Forward, SignalEncoderIsNotAmplitudeInvariant) {
  const Model m(config_with({}));
  Utterance u = small_corpus().utterances.front();
  Graph g1(false), g2(false);
  const Tensor b1 = g1.value(forward_utterance(g1, m, u).signal.b1);
  for (float& x : u.signal) x = -x;
  EXPECT_NE(g2.value(forward_utterance(g2, m, u).signal.b1), b1);
}

TEST(Forward, SharedWeightsGiveIdenticalWerLogits) {
  const Model mono(config_with({}));
  const Model multi(config_with({Task::Show, Task::Style, Task::Accent}));
  for (const Utterance& u : small_corpus().utterances) {
    Graph g1(false), g2(false);
    const ForwardResult a = forward_utterance(g1, mono, u), b = forward_utterance(g2, multi, u);
    EXPECT_TRUE(a.head.task_logits.empty());
    EXPECT_EQ(b.head.task_logits.size(), 3u);
    ASSERT_EQ(g1.value(a.head.wer_logits), g2.value(b.head.wer_logits)) << u.id;
  }
}

TEST(Heads, LabelsFromTrainSplit) {
  const TaskHead show = make_task_head(small_corpus(), Task::Show);
  EXPECT_EQ(show.classes(), 6u);
  EXPECT_TRUE(std::is_sorted(show.labels.begin(), show.labels.end()));
  EXPECT_EQ(make_task_head(small_corpus(), Task::Style).labels,
            (std::vector<std::string>{"NonSpontaneous", "Spontaneous"}));
  EXPECT_EQ(show.index_of("nope"), std::nullopt);
  EXPECT_EQ(show.index_of(show.labels[2]), 2u);
}

}  // namespace
