#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <set>

#include "werprobe/analysis.hpp"
#include "werprobe/error.hpp"
#include "werprobe/rng.hpp"

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

// Tau-b by direct enumeration of all pairs.
double tau_b_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      ++pairs;
      const int sx = (x[i] > x[j]) - (x[i] < x[j]);
      const int sy = (y[i] > y[j]) - (y[i] < y[j]);
      if (sx == 0) ++tied_x;
      if (sy == 0) ++tied_y;
      if (sx * sy > 0) ++concordant;
      if (sx * sy < 0) ++discordant;
    }
  }
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(pairs - tied_x) * static_cast<double>(pairs - tied_y));
}

TEST(Kendall, MatchesPairEnumerationOnTiedVectors) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    const std::size_t levels = 2 + rng.below(6);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(levels));
      y[i] = static_cast<double>(rng.below(levels));
    }
    const double expected = tau_b_oracle(x, y);
    if (std::isnan(expected) || std::isinf(expected)) {
      EXPECT_EQ(kind_of([&] { kendall_tau(x, y); }), ErrorKind::UndefinedCorrelation);
    } else {
      EXPECT_EQ(kendall_tau(x, y), expected) << "trial " << trial;
    }
  }
}

TEST(Kendall, KnownValuesAndErrors) {
  const std::vector<double> a{1, 2, 3, 4}, b{4, 3, 2, 1}, c{1, 1, 1, 1};
  EXPECT_EQ(kendall_tau(a, a), 1.0);
  EXPECT_EQ(kendall_tau(a, b), -1.0);
  EXPECT_EQ(kind_of([&] { kendall_tau(a, c); }), ErrorKind::UndefinedCorrelation);
  EXPECT_EQ(kind_of([&] { kendall_tau(std::vector<double>{1}, std::vector<double>{1}); }), ErrorKind::EmptyBatch);
  EXPECT_EQ(kind_of([&] { kendall_tau(a, std::vector<double>{1, 2}); }), ErrorKind::Dimension);
}

TEST(Mae, MatchesScalarLoop) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    std::vector<double> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(0, 150), t[i] = rng.uniform(0, 150);
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(p[i] - t[i]);
    EXPECT_NEAR(mean_absolute_error(p, t), acc / static_cast<double>(n), 1e-9);
  }
  EXPECT_EQ(kind_of([] { mean_absolute_error({}, {}); }), ErrorKind::EmptyBatch);
}

TEST(Confusion, RowsSumToTrueCounts) {
  Rng rng(8);
  const std::vector<std::string> labels{"a", "b", "c"};
  std::vector<std::string> truth, pred;
  std::map<std::string, std::size_t> counts;
  for (int i = 0; i < 300; ++i) {
    truth.push_back(labels[rng.below(3)]);
    pred.push_back(labels[rng.below(3)]);
    ++counts[truth.back()];
  }
  const ConfusionMatrix m = confusion_matrix(truth, pred, labels);
  for (std::size_t r = 0; r < labels.size(); ++r) EXPECT_EQ(m.row_total(r), counts[labels[r]]);
  EXPECT_EQ(m.total(), 300u);
  std::size_t diag = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) diag += truth[i] == pred[i];
  EXPECT_DOUBLE_EQ(m.accuracy(), static_cast<double>(diag) / 300.0);
  for (const auto& row : m.row_normalized()) {
    double s = 0;
    for (double v : row) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const std::vector<std::string> bad{"z"};
  EXPECT_EQ(kind_of([&] { confusion_matrix(bad, bad, labels); }), ErrorKind::Label);
  EXPECT_EQ(m.to_csv().substr(0, 15), "true\\pred,a,b,c");
}

PointMatrix gaussian_points(Rng& rng, std::size_t n, std::size_t d, double shift_every = 0.0) {
  PointMatrix p{n, d, std::vector<double>(n * d)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) p(i, j) = rng.normal() + (i % 2 == 1 ? shift_every : 0.0);
  }
  return p;
}

TEST(Tsne, ConditionalRowsSumToOne) {
  Rng rng(1);
  const PointMatrix x = gaussian_points(rng, 60, 5);
  const PointMatrix p = conditional_probabilities(x, 15.0);
  for (std::size_t i = 0; i < p.rows; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < p.cols; ++j) s += p(i, j);
    EXPECT_NEAR(s, 1.0, 1e-6);
    EXPECT_EQ(p(i, i), 0.0);
  }
}

TEST(Tsne, ConditionalRowsReachTargetPerplexity) {
  Rng rng(6);
  const PointMatrix x = gaussian_points(rng, 80, 4);
  const double target = 10.0;
  const PointMatrix p = conditional_probabilities(x, target);
  for (std::size_t i = 0; i < p.rows; ++i) {
    double h = 0;
    for (std::size_t j = 0; j < p.cols; ++j) {
      if (p(i, j) > 0) h -= p(i, j) * std::log(p(i, j));
    }
    EXPECT_NEAR(std::exp(h), target, 1e-3 * target);
  }
}

TEST(Tsne, KlDecreasesOnRandomData) {
  Rng rng(50);
  const PointMatrix x = gaussian_points(rng, 50, 10);
  TsneConfig c;
  c.seed = 3;
  const TsneResult r = tsne_project(x, c);
  EXPECT_EQ(r.embedding.rows, 50u);
  EXPECT_EQ(r.embedding.cols, 2u);
  EXPECT_LT(r.kl_final, r.kl_initial);
  EXPECT_DOUBLE_EQ(r.perplexity, 49.0 / 3.0);
}

TEST(Tsne, SeparatesTwoClusters) {
  Rng rng(12);
  const PointMatrix x = gaussian_points(rng, 100, 10, 8.0);
  TsneConfig c;
  c.seed = 7;
  const TsneResult r = tsne_project(x, c);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 100; ++i) labels.push_back(i % 2);
  EXPECT_GT(silhouette_score(r.embedding, labels), 0.5);
  EXPECT_EQ(r.embedding.values, tsne_project(x, c).embedding.values);
}

TEST(Tsne, RuntimeForTwoHundredPoints) {
  Rng rng(4);
  const PointMatrix x = gaussian_points(rng, 200, 16);
  const auto start = std::chrono::steady_clock::now();
  tsne_project(x, TsneConfig{});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
}

TEST(Tsne, PerplexityRules) {
  EXPECT_DOUBLE_EQ(effective_perplexity(30.0, 1000), 30.0);
  EXPECT_DOUBLE_EQ(effective_perplexity(30.0, 31), 10.0);
  Rng rng(1);
  EXPECT_EQ(kind_of([&] { tsne_project(gaussian_points(rng, 3, 2), TsneConfig{}); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { conditional_probabilities(gaussian_points(rng, 10, 2), 10.0); }), ErrorKind::Config);
}

TEST(Silhouette, HandComputedValue) {
  // Clusters {0, 1} and {4}: a(0)=1, b(0)=4 -> 0.75; a(1)=1, b(1)=3 -> 2/3; singleton -> 0.
  PointMatrix p{3, 1, {0.0, 1.0, 4.0}};
  const std::vector<std::size_t> labels{0, 0, 1};
  EXPECT_NEAR(silhouette_score(p, labels), (0.75 + 2.0 / 3.0 + 0.0) / 3.0, 1e-12);
}

Corpus durations_corpus() {
  Corpus c;
  for (int i = 0; i < 60; ++i) {
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.duration = 0.1 * i;
    c.utterances.push_back(u);
  }
  return c;
}

TEST(Buckets, PartitionsByDuration) {
  const Corpus c = durations_corpus();
  const auto [lo, hi] = parse_bucket("4..5");
  EXPECT_EQ(lo, 4.0);
  EXPECT_EQ(hi, 5.0);
  EXPECT_TRUE(std::isinf(parse_bucket("5..inf").second));
  const Corpus a = duration_bucket(c, 4.0, 5.0), b = duration_bucket(c, 5.0, 6.0);
  std::set<std::string> ids;
  for (const auto& u : a.utterances) {
    EXPECT_TRUE(u.duration >= 4.0 && u.duration < 5.0);
    ids.insert(u.id);
  }
  for (const auto& u : b.utterances) EXPECT_FALSE(ids.contains(u.id));
  EXPECT_EQ(a.utterances.size() + b.utterances.size(), duration_bucket(c, 4.0, 6.0).utterances.size());
  EXPECT_EQ(kind_of([] { parse_bucket("5..4"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_bucket("abc"); }), ErrorKind::Config);
}

PredictionSet rows(std::initializer_list<std::tuple<const char*, double, double>> items) {
  PredictionSet out;
  for (const auto& [id, t, p] : items) out.push_back({id, Split::Dev, t, p});
  return out;
}

TEST(Combine, ArithmeticMeanAndIdentity) {
  const PredictionSet a = rows({{"x", 10, 12}, {"y", 20, 30}});
  const PredictionSet b = rows({{"y", 20, 10}, {"x", 10, 16}});
  const std::vector<PredictionSet> both{a, b};
  const PredictionSet c = combine_predictions(both);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].id, "x");
  EXPECT_EQ(c[0].wer_pred, 14.0);
  EXPECT_EQ(c[1].wer_pred, 20.0);
  const std::vector<PredictionSet> one{a};
  EXPECT_EQ(combine_predictions(one), a);

  Rng rng(3);
  std::vector<PredictionSet> many(7);
  for (int i = 0; i < 40; ++i) {
    for (auto& s : many) s.push_back({"u" + std::to_string(i), Split::Test, 5.0, rng.uniform(0, 100)});
  }
  const PredictionSet m = combine_predictions(many);
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::vector<double> v;
    for (const auto& s : many) v.push_back(s[i].wer_pred);
    std::sort(v.begin(), v.end());
    double sum = 0;
    for (double x : v) sum += x;
    EXPECT_EQ(m[i].wer_pred, sum / 7.0);
  }
}

TEST(Combine, MisalignmentNamesTheId) {
  const std::vector<PredictionSet> bad{rows({{"x", 1, 1}, {"y", 2, 2}}), rows({{"x", 1, 1}, {"z", 2, 2}})};
  try {
    combine_predictions(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Alignment);
    EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos);
  }
}

TEST(PredictionCsv, RoundTripIsExact) {
  PredictionSet p{{"a", Split::Dev, 1.0 / 3.0, 0.1}, {"b", Split::Test, 150.0, 1e-17}};
  const std::string text = prediction_csv(p);
  EXPECT_EQ(text.substr(0, 24), "id,split,wer_true,wer_pr");
  EXPECT_EQ(parse_prediction_csv(text, "t"), p);
  EXPECT_EQ(kind_of([] { parse_prediction_csv("id,split\n", "t"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_prediction_csv("id,split,wer_true,wer_pred\na,DEV,1,x\n", "t"); }), ErrorKind::Parse);
}

TEST(Svg, ContainsPointsAndCells) {
  const std::vector<ScatterPoint> pts{{0, 0, "Spontaneous"}, {1, 1, "NonSpontaneous"}};
  const std::string s = scatter_svg(pts, "title <x>");
  EXPECT_NE(s.find("<svg"), std::string::npos);
  EXPECT_NE(s.find("&lt;x&gt;"), std::string::npos);
  const ConfusionMatrix m = confusion_matrix(std::vector<std::string>{"a", "b"}, std::vector<std::string>{"a", "a"},
                                             std::vector<std::string>{"a", "b"});
  EXPECT_NE(heatmap_svg(m, "h").find("<rect"), std::string::npos);
}

}  // namespace
