#include "werprobe/json_config.hpp"

#include <cmath>
#include <limits>

#include "json_util.hpp"
#include "werprobe/error.hpp"

WERPROBE_NAMESPACE_BEGIN

std::string canonical(const Json& j) { return j.dump(); }

namespace {

Json effects_json(const FactorEffects& e) { return {{"tokens", e.tokens}, {"signal", e.signal}, {"wer", e.wer}}; }

void read_effects(StrictReader& parent, const char* key, FactorEffects& e) {
  if (const Json* j = parent.child(key)) {
    StrictReader r(*j, parent.path(key));
    r.get("tokens", e.tokens);
    r.get("signal", e.signal);
    r.get("wer", e.wer);
    r.finish();
  }
}

Json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

void read_adam(StrictReader& parent, AdamConfig& a) {
  if (const Json* j = parent.child("adam")) {
    StrictReader r(*j, parent.path("adam"));
    r.get("lr", a.lr);
    r.get("beta1", a.beta1);
    r.get("beta2", a.beta2);
    r.get("epsilon", a.epsilon);
    r.finish();
  }
}

template <typename Enum, typename Parse>
void read_enum(StrictReader& r, const char* key, Enum& out, Parse parse) {
  std::string text;
  if (r.get(key, text)) out = parse(text);
}

}  // namespace

Json to_json(const GeneratorConfig& c) {
  return {{"n_train", c.n_train},
          {"n_dev", c.n_dev},
          {"n_test", c.n_test},
          {"n_shows", c.n_shows},
          {"n_test_shows", c.n_test_shows},
          {"vocab_size", c.vocab_size},
          {"sample_rate", c.sample_rate},
          {"max_duration_s", c.max_duration_s},
          {"wer_means", c.wer_means},
          {"wer_max", c.wer_max},
          {"wer_noise_std", c.wer_noise_std},
          {"effects", {{"style", effects_json(c.style)}, {"accent", effects_json(c.accent)}, {"show", effects_json(c.show)}}},
          {"spontaneous_fraction", c.spontaneous_fraction},
          {"non_native_fraction", c.non_native_fraction},
          {"show_weights", c.show_weights},
          {"seed", c.seed}};
}

GeneratorConfig generator_config_from_json(const Json& j, GeneratorConfig c) {
  StrictReader r(j, "generator");
  r.get("n_train", c.n_train);
  r.get("n_dev", c.n_dev);
  r.get("n_test", c.n_test);
  r.get("n_shows", c.n_shows);
  r.get("n_test_shows", c.n_test_shows);
  r.get("vocab_size", c.vocab_size);
  r.get("sample_rate", c.sample_rate);
  r.get("max_duration_s", c.max_duration_s);
  r.get("wer_means", c.wer_means);
  r.get("wer_max", c.wer_max);
  r.get("wer_noise_std", c.wer_noise_std);
  if (const Json* e = r.child("effects")) {
    StrictReader er(*e, r.path("effects"));
    read_effects(er, "style", c.style);
    read_effects(er, "accent", c.accent);
    read_effects(er, "show", c.show);
    er.finish();
  }
  r.get("spontaneous_fraction", c.spontaneous_fraction);
  r.get("non_native_fraction", c.non_native_fraction);
  r.get("show_weights", c.show_weights);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const ModelConfig& c) {
  Json stages = Json::array();
  for (const ConvStage& s : c.signal.stages) {
    stages.push_back({{"channels", s.channels}, {"kernel", s.kernel}, {"stride", s.stride}, {"pool", s.pool}});
  }
  Json tasks = Json::array();
  for (const TaskHead& h : c.tasks) tasks.push_back({{"task", to_string(h.task)}, {"labels", h.labels}});
  const LayerSpec& l = c.layers;
  return {{"layers",
           {{"A1", l.a1}, {"A2", l.a2}, {"A3", l.a3}, {"B1", l.b1}, {"B2", l.b2}, {"B3", l.b3}, {"B4", l.b4},
            {"C1", l.c1}, {"C2", l.c2}}},
          {"text",
           {{"vocab_size", c.text.vocab_size},
            {"max_tokens", c.text.max_tokens},
            {"embed_dim", c.text.embed_dim},
            {"filter_widths", c.text.filter_widths}}},
          {"signal", {{"input_len", c.signal.input_len}, {"stages", stages}}},
          {"wer_vector", c.wer_vector.centers},
          {"tasks", tasks},
          {"ablation", to_string(c.ablation)},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const Json& j, ModelConfig c) {
  StrictReader r(j, "model");
  if (const Json* lj = r.child("layers")) {
    StrictReader lr(*lj, r.path("layers"));
    LayerSpec& l = c.layers;
    lr.get("A1", l.a1);
    lr.get("A2", l.a2);
    lr.get("A3", l.a3);
    lr.get("B1", l.b1);
    lr.get("B2", l.b2);
    lr.get("B3", l.b3);
    lr.get("B4", l.b4);
    lr.get("C1", l.c1);
    lr.get("C2", l.c2);
    lr.finish();
  }
  if (const Json* tj = r.child("text")) {
    StrictReader tr(*tj, r.path("text"));
    tr.get("vocab_size", c.text.vocab_size);
    tr.get("max_tokens", c.text.max_tokens);
    tr.get("embed_dim", c.text.embed_dim);
    tr.get("filter_widths", c.text.filter_widths);
    tr.finish();
  }
  if (const Json* sj = r.child("signal")) {
    StrictReader sr(*sj, r.path("signal"));
    sr.get("input_len", c.signal.input_len);
    if (const Json* stages = sr.child("stages")) {
      if (!stages->is_array()) fail(ErrorKind::Config, "model.signal.stages must be an array");
      c.signal.stages.clear();
      for (const Json& st : *stages) {
        StrictReader str(st, sr.path("stages[]"));
        ConvStage s;
        str.get("channels", s.channels);
        str.get("kernel", s.kernel);
        str.get("stride", s.stride);
        str.get("pool", s.pool);
        str.finish();
        c.signal.stages.push_back(s);
      }
    }
    sr.finish();
  }
  r.get("wer_vector", c.wer_vector.centers);
  if (const Json* tasks = r.child("tasks")) {
    if (!tasks->is_array()) fail(ErrorKind::Config, "model.tasks must be an array");
    c.tasks.clear();
    for (const Json& tj : *tasks) {
      StrictReader tr(tj, r.path("tasks[]"));
      TaskHead h;
      read_enum(tr, "task", h.task, parse_task);
      tr.get("labels", h.labels);
      tr.finish();
      c.tasks.push_back(std::move(h));
    }
  }
  read_enum(r, "ablation", c.ablation, parse_branch_ablation);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer", to_string(c.optimizer)},
          {"adam", adam_json(c.adam)},
          {"adadelta", {{"rho", c.adadelta.rho}, {"epsilon", c.adadelta.epsilon}, {"lr", c.adadelta.lr}}},
          {"selection", to_string(c.selection)},
          {"main_weight", c.weights.main},
          {"task_weight", c.weights.task},
          {"seed", c.seed},
          {"shuffle", c.shuffle}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  StrictReader r(j, "train");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  read_enum(r, "optimizer", c.optimizer, parse_optimizer_kind);
  read_adam(r, c.adam);
  if (const Json* aj = r.child("adadelta")) {
    StrictReader ar(*aj, r.path("adadelta"));
    ar.get("rho", c.adadelta.rho);
    ar.get("epsilon", c.adadelta.epsilon);
    ar.get("lr", c.adadelta.lr);
    ar.finish();
  }
  read_enum(r, "selection", c.selection, parse_selection_metric);
  r.get("main_weight", c.weights.main);
  r.get("task_weight", c.weights.task);
  r.get("seed", c.seed);
  r.get("shuffle", c.shuffle);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const ProbeConfig& c) {
  return {{"hidden_size", c.hidden_size}, {"dropout_rate", c.dropout_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},   {"adam", adam_json(c.adam)},       {"seed", c.seed}};
}

ProbeConfig probe_config_from_json(const Json& j, ProbeConfig c) {
  StrictReader r(j, "probe");
  r.get("hidden_size", c.hidden_size);
  r.get("dropout_rate", c.dropout_rate);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  read_adam(r, c.adam);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const TsneConfig& c) {
  return {{"perplexity", c.perplexity},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"early_exaggeration", c.early_exaggeration},
          {"exaggeration_iterations", c.exaggeration_iterations},
          {"initial_momentum", c.initial_momentum},
          {"final_momentum", c.final_momentum},
          {"momentum_switch", c.momentum_switch},
          {"normalize_input", c.normalize_input},
          {"seed", c.seed}};
}

TsneConfig tsne_config_from_json(const Json& j, TsneConfig c) {
  StrictReader r(j, "tsne");
  r.get("perplexity", c.perplexity);
  r.get("iterations", c.iterations);
  r.get("learning_rate", c.learning_rate);
  r.get("early_exaggeration", c.early_exaggeration);
  r.get("exaggeration_iterations", c.exaggeration_iterations);
  r.get("initial_momentum", c.initial_momentum);
  r.get("final_momentum", c.final_momentum);
  r.get("momentum_switch", c.momentum_switch);
  r.get("normalize_input", c.normalize_input);
  r.get("seed", c.seed);
  r.finish();
  if (!(c.perplexity > 0)) fail(ErrorKind::Config, "tsne.perplexity must be positive");
  if (c.iterations < 1) fail(ErrorKind::Config, "tsne.iterations must be >= 1");
  return c;
}

Json to_json(const TrainLog& log) {
  Json rows = Json::array();
  auto num = [](double v) { return std::isnan(v) ? Json(nullptr) : Json(v); };
  for (const EpochRecord& e : log.epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"train_loss", num(e.train_loss)},
                    {"dev_mae", num(e.dev_mae)},
                    {"dev_kendall", num(e.dev_kendall)},
                    {"dev_acc_show", num(e.dev_acc_show)},
                    {"dev_acc_style", num(e.dev_acc_style)},
                    {"dev_acc_accent", num(e.dev_acc_accent)},
                    {"selected", e.selected}});
  }
  return rows;
}

TrainLog train_log_from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorKind::Parse, "train log must be an array");
  auto num = [](const Json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  TrainLog log;
  for (const Json& row : j) {
    EpochRecord e;
    e.epoch = row.at("epoch").get<std::size_t>();
    e.train_loss = num(row.at("train_loss"));
    e.dev_mae = num(row.at("dev_mae"));
    e.dev_kendall = num(row.at("dev_kendall"));
    e.dev_acc_show = num(row.at("dev_acc_show"));
    e.dev_acc_style = num(row.at("dev_acc_style"));
    e.dev_acc_accent = num(row.at("dev_acc_accent"));
    e.selected = row.at("selected").get<bool>();
    log.epochs.push_back(e);
  }
  return log;
}

WERPROBE_NAMESPACE_END
