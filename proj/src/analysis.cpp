#include "werprobe/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "werprobe/error.hpp"
#include "werprobe/rng.hpp"

WERPROBE_NAMESPACE_BEGIN

// ---------------------------------------------------------------------------
// Metrics

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::Dimension, "kendall_tau: lengths " + std::to_string(x.size()) + " and " +
                                   std::to_string(y.size()));
  }
  if (x.size() < 2) fail(ErrorKind::EmptyBatch, "kendall_tau: need at least 2 observations");
  std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const bool tx = x[i] == x[j];
      const bool ty = y[i] == y[j];
      if (tx && ty) continue;
      if (tx) {
        ++ties_x;
      } else if (ty) {
        ++ties_y;
      } else if ((x[i] < x[j]) == (y[i] < y[j])) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const std::int64_t nx = concordant + discordant + ties_x;
  const std::int64_t ny = concordant + discordant + ties_y;
  if (nx == 0 || ny == 0) fail(ErrorKind::UndefinedCorrelation, "kendall_tau: all pairs tied on one variable");
  return static_cast<double>(concordant - discordant) /
         std::sqrt(static_cast<double>(nx) * static_cast<double>(ny));
}

double mean_absolute_error(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) {
    fail(ErrorKind::Dimension, "mean_absolute_error: lengths " + std::to_string(predicted.size()) + " and " +
                                   std::to_string(truth.size()));
  }
  if (predicted.empty()) fail(ErrorKind::EmptyBatch, "mean_absolute_error: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) total += std::abs(predicted[i] - truth[i]);
  return total / static_cast<double>(predicted.size());
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += row_total(i);
  return n;
}

std::size_t ConfusionMatrix::row_total(std::size_t row) const {
  std::size_t n = 0;
  for (std::size_t c : counts.at(row)) n += c;
  return n;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t diag = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) diag += counts[i][i];
  return static_cast<double>(diag) / static_cast<double>(n);
}

std::vector<std::vector<double>> ConfusionMatrix::row_normalized() const {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::size_t n = row_total(i);
    std::vector<double> row(counts[i].size(), 0.0);
    if (n > 0) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = static_cast<double>(counts[i][j]) / static_cast<double>(n);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream out;
  out << "true\\pred";
  for (const std::string& l : labels) out << ',' << l;
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i];
    for (std::size_t c : counts[i]) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

ConfusionMatrix confusion_matrix(std::span<const std::string> truths, std::span<const std::string> predictions,
                                 std::vector<std::string> labels) {
  if (truths.size() != predictions.size()) {
    fail(ErrorKind::Dimension, "confusion_matrix: " + std::to_string(truths.size()) + " truths vs " +
                                   std::to_string(predictions.size()) + " predictions");
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!index.emplace(labels[i], i).second) fail(ErrorKind::Label, "confusion_matrix: duplicate label " + labels[i]);
  }
  ConfusionMatrix m;
  m.counts.assign(labels.size(), std::vector<std::size_t>(labels.size(), 0));
  auto lookup = [&](const std::string& l) {
    auto it = index.find(l);
    if (it == index.end()) fail(ErrorKind::Label, "confusion_matrix: unknown label '" + l + "'");
    return it->second;
  };
  for (std::size_t i = 0; i < truths.size(); ++i) ++m.counts[lookup(truths[i])][lookup(predictions[i])];
  m.labels = std::move(labels);
  return m;
}

// ---------------------------------------------------------------------------
// t-SNE

namespace {

PointMatrix squared_distances(const PointMatrix& x) {
  const std::size_t n = x.rows;
  PointMatrix d{n, n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols; ++k) {
        const double diff = x(i, k) - x(j, k);
        s += diff * diff;
      }
      d(i, j) = d(j, i) = s;
    }
  }
  return d;
}

void check_points(const PointMatrix& points, const char* op) {
  if (points.values.size() != points.rows * points.cols || points.cols == 0) {
    fail(ErrorKind::Dimension, std::string(op) + ": malformed point matrix");
  }
}

}  // namespace

double effective_perplexity(double perplexity, std::size_t n) {
  if (n < 2) return perplexity;
  const double limit = static_cast<double>(n - 1) / 3.0;
  return 3.0 * perplexity > static_cast<double>(n - 1) ? limit : perplexity;
}

PointMatrix conditional_probabilities(const PointMatrix& points, double perplexity) {
  check_points(points, "tsne");
  const std::size_t n = points.rows;
  if (!(perplexity > 0.0) || perplexity >= static_cast<double>(n)) {
    fail(ErrorKind::Config, "tsne: perplexity " + std::to_string(perplexity) + " must lie in (0, N=" +
                                std::to_string(n) + ")");
  }
  const PointMatrix d = squared_distances(points);
  PointMatrix p{n, n, std::vector<double>(n * n, 0.0)};
  const double target = std::log(perplexity);
  constexpr double kTolerance = 1e-5;
  constexpr int kMaxSteps = 50;
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = -std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::max();
    double* row = &p.values[i * n];
    for (int step = 0; step < kMaxSteps; ++step) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * d(i, j));
        sum += row[j];
      }
      if (sum <= std::numeric_limits<double>::min()) sum = std::numeric_limits<double>::min();
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) weighted += beta * d(i, j) * row[j];
      const double entropy = weighted / sum + std::log(sum);
      const double diff = entropy - target;
      if (std::abs(diff) < kTolerance) break;
      if (diff > 0) {
        lo = beta;
        beta = hi == std::numeric_limits<double>::max() ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = lo == -std::numeric_limits<double>::max() ? beta / 2.0 : (beta + lo) / 2.0;
      }
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = j == i ? 0.0 : std::exp(-beta * d(i, j));
      sum += row[j];
    }
    if (sum <= 0.0) {
      // Every neighbour underflowed; fall back to uniform affinities.
      for (std::size_t j = 0; j < n; ++j) row[j] = j == i ? 0.0 : 1.0 / static_cast<double>(n - 1);
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
  }
  return p;
}

namespace {

double kl_divergence(const PointMatrix& p, const PointMatrix& y) {
  const std::size_t n = p.rows;
  std::vector<double> q(n * n, 0.0);
  double sum_q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      q[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
      sum_q += q[i * n + j];
    }
  }
  double kl = 0.0;
  constexpr double kFloor = std::numeric_limits<float>::min();
  for (std::size_t k = 0; k < n * n; ++k) {
    if (p.values[k] > 0) kl += p.values[k] * std::log((p.values[k] + kFloor) / (q[k] / sum_q + kFloor));
  }
  return kl;
}

}  // namespace

TsneResult tsne_project(const PointMatrix& points, const TsneConfig& config) {
  check_points(points, "tsne");
  const std::size_t n = points.rows;
  if (n < 4) fail(ErrorKind::Config, "tsne: need at least 4 points, got " + std::to_string(n));
  if (config.iterations < 1) fail(ErrorKind::Config, "tsne: iterations must be >= 1");
  if (!(config.perplexity > 0) || config.perplexity >= static_cast<double>(n)) {
    fail(ErrorKind::Config, "tsne: perplexity " + std::to_string(config.perplexity) + " must lie in (0, N=" +
                                std::to_string(n) + ")");
  }
  if (!(config.learning_rate > 0)) fail(ErrorKind::Config, "tsne: learning_rate must be positive");

  PointMatrix x = points;
  if (config.normalize_input) {
    for (std::size_t k = 0; k < x.cols; ++k) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x(i, k);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) x(i, k) -= mean;
    }
    double peak = 0.0;
    for (double v : x.values) peak = std::max(peak, std::abs(v));
    if (peak > 0) {
      for (double& v : x.values) v /= peak;
    }
  }

  TsneResult result;
  result.perplexity = effective_perplexity(config.perplexity, n);
  PointMatrix p = conditional_probabilities(x, result.perplexity);
  {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = p(i, j) + p(j, i);
        p(i, j) = p(j, i) = s;
        total += 2.0 * s;
      }
    }
    for (double& v : p.values) v /= total;
  }

  Rng rng(config.seed);
  PointMatrix y{n, 2, std::vector<double>(n * 2)};
  for (double& v : y.values) v = rng.normal(0.0, 1e-4);
  result.kl_initial = kl_divergence(p, y);

  std::vector<double> grad(n * 2), update(n * 2, 0.0), gains(n * 2, 1.0), q(n * n);
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    const double exaggeration = iter < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
    const double momentum = iter < config.momentum_switch ? config.initial_momentum : config.final_momentum;
    double sum_q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      q[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        q[i * n + j] = q[j * n + i] = v;
        sum_q += 2.0 * v;
      }
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double num = q[i * n + j];
        const double mult = (exaggeration * p(i, j) - num / sum_q) * num;
        grad[i * 2] += 4.0 * mult * (y(i, 0) - y(j, 0));
        grad[i * 2 + 1] += 4.0 * mult * (y(i, 1) - y(j, 1));
      }
    }
    for (std::size_t k = 0; k < n * 2; ++k) {
      auto sign = [](double v) { return (v > 0) - (v < 0); };
      const bool same_sign = sign(grad[k]) == sign(update[k]);
      gains[k] = same_sign ? gains[k] * 0.8 : gains[k] + 0.2;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - config.learning_rate * gains[k] * grad[k];
      y.values[k] += update[k];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
    }
  }
  result.kl_final = kl_divergence(p, y);
  result.embedding = std::move(y);
  return result;
}

double silhouette_score(const PointMatrix& points, std::span<const std::size_t> labels) {
  check_points(points, "silhouette_score");
  const std::size_t n = points.rows;
  if (labels.size() != n) fail(ErrorKind::Dimension, "silhouette_score: label count differs from point count");
  std::map<std::size_t, std::size_t> sizes;
  for (std::size_t l : labels) ++sizes[l];
  if (sizes.size() < 2) fail(ErrorKind::Label, "silhouette_score: need at least 2 clusters");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::size_t, double> dist_sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < points.cols; ++k) {
        const double d = points(i, k) - points(j, k);
        s += d * d;
      }
      dist_sum[labels[j]] += std::sqrt(s);
    }
    const std::size_t own = sizes[labels[i]];
    if (own < 2) continue;  // singleton clusters score 0
    const double a = dist_sum[labels[i]] / static_cast<double>(own - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, size] : sizes) {
      if (label != labels[i]) b = std::min(b, dist_sum[label] / static_cast<double>(size));
    }
    const double denom = std::max(a, b);
    if (denom > 0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

Corpus duration_bucket(const Corpus& corpus, double lo_s, double hi_s) {
  if (!(lo_s < hi_s)) fail(ErrorKind::Config, "duration bucket requires lo < hi");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const double d = corpus.utterances[i].duration;
    if (d >= lo_s && d < hi_s) keep.push_back(i);
  }
  return corpus.subset(keep);
}

std::pair<double, double> parse_bucket(std::string_view text) {
  const std::size_t sep = text.find("..");
  if (sep == std::string_view::npos) fail(ErrorKind::Config, "bucket '" + std::string(text) + "' is not LO..HI");
  auto number = [&](std::string_view s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      fail(ErrorKind::Config, "bucket bound '" + std::string(s) + "' is not a number");
    }
    return v;
  };
  const double lo = number(text.substr(0, sep));
  const double hi = number(text.substr(sep + 2));
  if (!(lo < hi)) fail(ErrorKind::Config, "bucket '" + std::string(text) + "' requires LO < HI");
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Predictions

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string prediction_csv(const PredictionSet& rows) {
  std::string out = "id,split,wer_true,wer_pred\n";
  for (const PredictionRow& r : rows) {
    out += r.id + "," + std::string(to_string(r.split)) + "," + format_double(r.wer_true) + "," +
           format_double(r.wer_pred) + "\n";
  }
  return out;
}

PredictionSet parse_prediction_csv(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "id,split,wer_true,wer_pred") {
    fail(ErrorKind::Parse, what + ": missing header id,split,wer_true,wer_pred");
  }
  PredictionSet rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    const std::string where = what + " line " + std::to_string(line_no);
    if (fields.size() != 4) fail(ErrorKind::Parse, where + ": expected 4 fields");
    PredictionRow r;
    r.id = fields[0];
    try {
      r.split = parse_split(fields[1]);
    } catch (const Error& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    }
    for (int k = 0; k < 2; ++k) {
      const std::string& s = fields[2 + k];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::Parse, where + ": bad number '" + s + "'");
      (k == 0 ? r.wer_true : r.wer_pred) = v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

PredictionSet combine_predictions(std::span<const PredictionSet> systems) {
  if (systems.empty()) fail(ErrorKind::Config, "combine_predictions: no systems");
  const PredictionSet& ref = systems.front();
  std::vector<std::unordered_map<std::string, std::size_t>> index(systems.size());
  for (std::size_t s = 0; s < systems.size(); ++s) {
    if (systems[s].size() != ref.size()) {
      // Report the first id present in one system but not the other.
      std::unordered_map<std::string, std::size_t> ids;
      for (std::size_t i = 0; i < systems[s].size(); ++i) ids.emplace(systems[s][i].id, i);
      for (const PredictionRow& r : ref) {
        if (!ids.contains(r.id)) fail(ErrorKind::Alignment, "system " + std::to_string(s) + " lacks id '" + r.id + "'");
      }
      std::unordered_map<std::string, std::size_t> ref_ids;
      for (std::size_t i = 0; i < ref.size(); ++i) ref_ids.emplace(ref[i].id, i);
      for (const PredictionRow& r : systems[s]) {
        if (!ref_ids.contains(r.id)) {
          fail(ErrorKind::Alignment, "system " + std::to_string(s) + " has extra id '" + r.id + "'");
        }
      }
      fail(ErrorKind::Alignment, "system " + std::to_string(s) + " has duplicated ids");
    }
    for (std::size_t i = 0; i < systems[s].size(); ++i) {
      if (!index[s].emplace(systems[s][i].id, i).second) {
        fail(ErrorKind::Alignment, "system " + std::to_string(s) + " repeats id '" + systems[s][i].id + "'");
      }
    }
  }
  PredictionSet out;
  out.reserve(ref.size());
  std::vector<double> values(systems.size());
  for (const PredictionRow& r : ref) {
    for (std::size_t s = 0; s < systems.size(); ++s) {
      auto it = index[s].find(r.id);
      if (it == index[s].end()) fail(ErrorKind::Alignment, "system " + std::to_string(s) + " lacks id '" + r.id + "'");
      const PredictionRow& m = systems[s][it->second];
      if (m.wer_true != r.wer_true || m.split != r.split) {
        fail(ErrorKind::Alignment, "system " + std::to_string(s) + " disagrees on the truth for id '" + r.id + "'");
      }
      values[s] = m.wer_pred;
    }
    // Sorting first makes the sum independent of system order.
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (double v : values) total += v;
    PredictionRow c = r;
    c.wer_pred = std::clamp(total / static_cast<double>(values.size()), values.front(), values.back());
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

const char* palette(std::size_t i) {
  static const std::array<const char*, 10> kColors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return kColors[i % kColors.size()];
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string scatter_svg(std::span<const ScatterPoint> points, const std::string& title) {
  constexpr double kSize = 480.0, kMargin = 40.0;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points[0].x;
    y0 = y1 = points[0].y;
    for (const ScatterPoint& p : points) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  }
  const double sx = (kSize - 2 * kMargin) / std::max(x1 - x0, 1e-12);
  const double sy = (kSize - 2 * kMargin) / std::max(y1 - y0, 1e-12);
  std::map<std::string, std::size_t> colors;
  for (const ScatterPoint& p : points) colors.emplace(p.label, colors.size());

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize + 20 * colors.size()
      << "\">\n<text x=\"" << kMargin << "\" y=\"24\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (const ScatterPoint& p : points) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                  kMargin + (p.x - x0) * sx, kSize - kMargin - (p.y - y0) * sy, palette(colors[p.label]));
    out << buf;
  }
  std::size_t row = 0;
  for (const auto& [label, c] : colors) {
    const double y = kSize + 20.0 * static_cast<double>(row++);
    out << "<rect x=\"" << kMargin << "\" y=\"" << y - 10 << "\" width=\"10\" height=\"10\" fill=\"" << palette(c)
        << "\"/><text x=\"" << kMargin + 16 << "\" y=\"" << y << "\" font-size=\"12\">" << escape(label)
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string heatmap_svg(const ConfusionMatrix& matrix, const std::string& title) {
  constexpr double kCell = 48.0, kLeft = 120.0, kTop = 120.0;
  const auto norm = matrix.row_normalized();
  const std::size_t k = matrix.labels.size();
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + kCell * k + 20 << "\" height=\""
      << kTop + kCell * k + 20 << "\">\n<text x=\"10\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (std::size_t j = 0; j < k; ++j) {
    out << "<text x=\"" << kLeft + kCell * j + kCell / 2 << "\" y=\"" << kTop - 8
        << "\" font-size=\"11\" transform=\"rotate(-45 " << kLeft + kCell * j + kCell / 2 << ' ' << kTop - 8
        << ")\">" << escape(matrix.labels[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < k; ++i) {
    out << "<text x=\"8\" y=\"" << kTop + kCell * i + kCell / 2 + 4 << "\" font-size=\"11\">"
        << escape(matrix.labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < k; ++j) {
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - norm[i][j])));
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"rgb(%d,%d,255)\"/>"
                    "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.2f</text>\n",
                    kLeft + kCell * j, kTop + kCell * i, kCell, kCell, shade, shade, kLeft + kCell * j + kCell / 2,
                    kTop + kCell * i + kCell / 2 + 4, norm[i][j]);
      out << buf;
    }
  }
  out << "</svg>\n";
  return out.str();
}

WERPROBE_NAMESPACE_END
