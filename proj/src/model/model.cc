#include "rec4ad/model/model.h"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "rec4ad/common/error.h"
#include "rec4ad/common/random.h"
#include "rec4ad/common/text.h"
#include "rec4ad/diffcore/ops.h"

namespace rec4ad::model {

namespace ops = diffcore;
using nlohmann::json;

namespace {

const char* kSourcePrefix[2] = {"ad", "rec"};

void CheckId(int id, int vocab, const char* field) {
  if (id < 0 || id >= vocab) {
    throw ShapeError(std::string("batch: ") + field + " id " + std::to_string(id) +
                     " outside vocabulary of size " + std::to_string(vocab));
  }
}

Matrix GlorotUniform(Rng& rng, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(rng);
  return w;
}

Matrix UniformMatrix(Rng& rng, int rows, int cols, double limit) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

enum class Act { kNone, kPrelu, kRelu };

void AddDense(ParameterStore& store, Rng& rng, const std::string& name, int in, int out,
              Act act) {
  store.add(name + "/W", GlorotUniform(rng, in, out));
  store.add(name + "/b", Matrix::Zero(1, out));
  if (act == Act::kPrelu) store.add(name + "/slope", Matrix::Constant(1, out, 0.25));
}

Var Dense(Tape& tape, ParameterStore& store, Var x, const std::string& name, Act act) {
  Var y = ops::Affine(x, tape.param(store.get(name + "/W")), tape.param(store.get(name + "/b")));
  switch (act) {
    case Act::kPrelu:
      return ops::Prelu(y, tape.param(store.get(name + "/slope")));
    case Act::kRelu:
      return ops::Relu(y);
    case Act::kNone:
      break;
  }
  return y;
}

// age, gender, ad, item + category (target), brand, campaign, time, device,
// attention-pooled behaviours (item + category).
int EmbeddingWidth(const ModelConfig& c) { return 11 * c.embedding_dim; }

}  // namespace

Vocab VocabFromCatalog(const sim::Catalog& catalog) {
  const sim::CatalogConfig& c = catalog.config;
  Vocab v;
  v.users = static_cast<int>(catalog.users.size());
  v.ads = static_cast<int>(catalog.ads.size());
  v.items = static_cast<int>(catalog.items.size());
  v.categories = c.num_categories;
  v.brands = c.num_brands;
  v.campaigns = c.num_campaigns;
  v.age_buckets = c.num_age_buckets;
  v.gender_buckets = c.num_gender_buckets;
  v.time_buckets = c.num_time_buckets;
  v.devices = c.num_devices;
  v.max_behavior_len = std::max(1, c.max_behavior_len);
  return v;
}

void ModelConfig::Validate() const {
  const Vocab& v = vocab;
  if (v.users < 1 || v.ads < 1 || v.items < 1 || v.categories < 1 || v.brands < 1 ||
      v.campaigns < 1 || v.age_buckets < 1 || v.gender_buckets < 1 || v.time_buckets < 1 ||
      v.devices < 1 || v.max_behavior_len < 1) {
    throw ConfigError("model vocabulary sizes must be positive");
  }
  if (embedding_dim <= 0 || attention_width <= 0 || discriminator_width <= 0) {
    throw ConfigError("model widths must be positive");
  }
  if (projection_dim <= 0) throw ConfigError("projection_dim must be positive");
  if (backbone_widths.empty()) throw ConfigError("backbone_widths must be non-empty");
  for (int w : backbone_widths) {
    if (w <= 0) throw ConfigError("backbone widths must be positive");
  }
  for (int w : head_widths) {
    if (w <= 0) throw ConfigError("head widths must be positive");
  }
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("lambdas must be >= 0");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum in [0, 1)");
  if (!(bn_eps >= 0.0) || !(pearson_eps >= 0.0)) throw ConfigError("eps values must be >= 0");
}

std::string ModelConfig::ToHeader() const {
  const Vocab& v = vocab;
  json j = {
      {"schema", "rec4ad.model/1"},
      {"vocab",
       {{"users", v.users},
        {"ads", v.ads},
        {"items", v.items},
        {"categories", v.categories},
        {"brands", v.brands},
        {"campaigns", v.campaigns},
        {"age_buckets", v.age_buckets},
        {"gender_buckets", v.gender_buckets},
        {"time_buckets", v.time_buckets},
        {"devices", v.devices},
        {"max_behavior_len", v.max_behavior_len}}},
      {"embedding_dim", embedding_dim},
      {"attention_width", attention_width},
      {"backbone_widths", backbone_widths},
      {"projection_dim", projection_dim},
      {"head_widths", head_widths},
      {"discriminator_width", discriminator_width},
      {"alpha", alpha},
      {"lambda1", lambda1},
      {"lambda2", lambda2},
      {"bn_momentum", bn_momentum},
      {"bn_eps", bn_eps},
      {"pearson_eps", pearson_eps},
      {"use_sabn", use_sabn},
      {"use_alignment", use_alignment},
      {"use_decorrelation", use_decorrelation},
      {"use_source_heads", use_source_heads},
  };
  return j.dump();
}

ModelConfig ModelConfig::FromHeader(const std::string& header) {
  ModelConfig c;
  try {
    const json j = json::parse(header);
    if (j.at("schema") != "rec4ad.model/1") throw FormatError("unknown model header schema");
    const json& v = j.at("vocab");
    c.vocab = {v.at("users"),        v.at("ads"),         v.at("items"),
               v.at("categories"),   v.at("brands"),      v.at("campaigns"),
               v.at("age_buckets"),  v.at("gender_buckets"), v.at("time_buckets"),
               v.at("devices"),      v.at("max_behavior_len")};
    c.embedding_dim = j.at("embedding_dim");
    c.attention_width = j.at("attention_width");
    c.backbone_widths = j.at("backbone_widths").get<std::vector<int>>();
    c.projection_dim = j.at("projection_dim");
    c.head_widths = j.at("head_widths").get<std::vector<int>>();
    c.discriminator_width = j.at("discriminator_width");
    c.alpha = j.at("alpha");
    c.lambda1 = j.at("lambda1");
    c.lambda2 = j.at("lambda2");
    c.bn_momentum = j.at("bn_momentum");
    c.bn_eps = j.at("bn_eps");
    c.pearson_eps = j.at("pearson_eps");
    c.use_sabn = j.at("use_sabn");
    c.use_alignment = j.at("use_alignment");
    c.use_decorrelation = j.at("use_decorrelation");
    c.use_source_heads = j.at("use_source_heads");
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }
  return c;
}

BatchTensors MakeBatch(std::span<const augment::UnifiedSample> samples,
                       std::span<const int> indices, const Vocab& vocab,
                       std::span<const double> weights) {
  if (!weights.empty() && weights.size() != indices.size()) {
    throw ShapeError("batch: weights length differs from batch size");
  }
  const std::size_t b = indices.size();
  const int len = vocab.max_behavior_len;
  BatchTensors t;
  for (auto* v : {&t.user, &t.age, &t.gender, &t.ad, &t.item, &t.category, &t.brand,
                  &t.campaign, &t.time, &t.device}) {
    v->reserve(b);
  }
  t.behavior_item.assign(b * static_cast<std::size_t>(len), 0);
  t.behavior_category.assign(b * static_cast<std::size_t>(len), 0);
  t.behavior_mask = Matrix::Zero(static_cast<Eigen::Index>(b), len);
  t.weight.assign(weights.begin(), weights.end());
  for (std::size_t r = 0; r < b; ++r) {
    const int idx = indices[r];
    if (idx < 0 || idx >= static_cast<int>(samples.size())) {
      throw ShapeError("batch: sample index out of range");
    }
    const augment::UnifiedSample& s = samples[static_cast<std::size_t>(idx)];
    CheckId(s.user_id, vocab.users, "user");
    CheckId(s.age_bucket, vocab.age_buckets, "age");
    CheckId(s.gender, vocab.gender_buckets, "gender");
    CheckId(s.ad_id, vocab.ads, "ad");
    CheckId(s.item_id, vocab.items, "item");
    CheckId(s.category_id, vocab.categories, "category");
    CheckId(s.brand_id, vocab.brands, "brand");
    CheckId(s.campaign_feature, vocab.campaigns, "campaign");
    CheckId(s.context.time_bucket, vocab.time_buckets, "time");
    CheckId(s.context.device, vocab.devices, "device");
    if (s.behavior_seq.size() > static_cast<std::size_t>(len)) {
      throw ShapeError("batch: behaviour sequence longer than max_behavior_len");
    }
    t.user.push_back(s.user_id);
    t.age.push_back(s.age_bucket);
    t.gender.push_back(s.gender);
    t.ad.push_back(s.ad_id);
    t.item.push_back(s.item_id);
    t.category.push_back(s.category_id);
    t.brand.push_back(s.brand_id);
    t.campaign.push_back(s.campaign_feature);
    t.time.push_back(s.context.time_bucket);
    t.device.push_back(s.context.device);
    for (std::size_t l = 0; l < s.behavior_seq.size(); ++l) {
      CheckId(s.behavior_seq[l].item_id, vocab.items, "behaviour item");
      CheckId(s.behavior_seq[l].category_id, vocab.categories, "behaviour category");
      t.behavior_item[r * len + l] = s.behavior_seq[l].item_id;
      t.behavior_category[r * len + l] = s.behavior_seq[l].category_id;
      t.behavior_mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)) = 1.0;
    }
    t.label.push_back(s.label);
    const bool is_ad = s.source == sim::Source::kAd;
    t.source.push_back(is_ad ? 1.0 : 0.0);
    (is_ad ? t.ad_rows : t.rec_rows).push_back(static_cast<int>(r));
  }
  return t;
}

BatchTensors MakeBatch(std::span<const augment::UnifiedSample> samples, const Vocab& vocab) {
  std::vector<int> all(samples.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
  return MakeBatch(samples, all, vocab);
}

void AddSabnParameters(ParameterStore& store, const std::string& prefix, int width) {
  for (const char* s : kSourcePrefix) {
    const std::string p = prefix + "/" + s;
    store.add(p + "/gamma", Matrix::Ones(1, width));
    store.add(p + "/beta", Matrix::Zero(1, width));
    store.add(p + "/mean", Matrix::Zero(1, width), /*trainable=*/false);
    store.add(p + "/var", Matrix::Ones(1, width), /*trainable=*/false);
  }
}

Var SourceAwareBatchNorm(Tape& tape, Var e, const BatchTensors& batch, ParameterStore& store,
                         const std::string& prefix, Mode mode, double momentum, double eps,
                         bool shared, bool update_running) {
  if (e.rows() != batch.size()) throw ShapeError("sabn: input rows differ from batch size");
  std::vector<int> all;
  std::vector<std::vector<int>> row_sets;
  if (shared) {
    all.resize(static_cast<std::size_t>(batch.size()));
    for (int r = 0; r < batch.size(); ++r) all[r] = r;
    row_sets = {all, {}};
  } else {
    row_sets = {batch.ad_rows, batch.rec_rows};
  }
  std::vector<Var> parts;
  std::vector<std::vector<int>> indices;
  for (int s = 0; s < 2; ++s) {
    const std::vector<int>& rows = row_sets[s];
    if (rows.empty()) continue;
    const std::string p = prefix + "/" + kSourcePrefix[s];
    Var part = static_cast<int>(rows.size()) == batch.size() ? e : ops::GatherRows(e, rows);
    Var mean, var;
    if (mode == Mode::kTrain) {
      if (rows.size() < 2) {
        throw ShapeError(std::string("sabn: source '") + kSourcePrefix[s] +
                         "' has a single row in a training batch; variance is undefined, "
                         "use a larger batch");
      }
      mean = ops::MeanRows(part);
      var = ops::VarianceRows(part);
      if (update_running) {
        const double n = static_cast<double>(rows.size());
        Matrix& run_mean = store.get(p + "/mean").value;
        Matrix& run_var = store.get(p + "/var").value;
        run_mean = momentum * run_mean + (1.0 - momentum) * mean.value();
        run_var = momentum * run_var + (1.0 - momentum) * (n / (n - 1.0)) * var.value();
      }
    } else {
      mean = tape.constant(store.get(p + "/mean").value);
      var = tape.constant(store.get(p + "/var").value);
    }
    Var normalized = ops::Div(ops::Sub(part, mean), ops::Sqrt(ops::AddScalar(var, eps)));
    Var out = ops::Add(ops::Mul(normalized, tape.param(store.get(p + "/gamma"))),
                       tape.param(store.get(p + "/beta")));
    parts.push_back(out);
    indices.push_back(rows);
  }
  if (parts.size() == 1 && static_cast<int>(indices[0].size()) == batch.size()) return parts[0];
  return ops::MergeRows(parts, indices, batch.size());
}

Rec4AdModel::Rec4AdModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.Validate();
  InitParameters(seed);
}

Rec4AdModel::Rec4AdModel(const ModelConfig& config, ParameterStore store)
    : config_(config), store_(std::move(store)) {
  config_.Validate();
}

void Rec4AdModel::InitParameters(std::uint64_t seed) {
  const ModelConfig& c = config_;
  const Vocab& v = c.vocab;
  const int k = c.embedding_dim;
  Rng rng(DeriveSeed(seed, 300));
  const double emb_limit = 0.05;
  const std::pair<const char*, int> tables[] = {
      {"age", v.age_buckets},    {"gender", v.gender_buckets},
      {"ad", v.ads},             {"item", v.items},      {"category", v.categories},
      {"brand", v.brands},       {"campaign", v.campaigns}, {"time", v.time_buckets},
      {"device", v.devices}};
  for (const auto& [name, size] : tables) {
    store_.add(std::string("emb/") + name, UniformMatrix(rng, size, k, emb_limit));
  }
  // Attention unit over [behaviour, target, behaviour * target].
  AddDense(store_, rng, "att/0", 6 * k, c.attention_width, Act::kPrelu);
  AddDense(store_, rng, "att/1", c.attention_width, 1, Act::kNone);
  const int e_width = EmbeddingWidth(c);
  AddSabnParameters(store_, "sabn", e_width);
  int in = e_width;
  for (std::size_t l = 0; l < c.backbone_widths.size(); ++l) {
    AddDense(store_, rng, "backbone/" + std::to_string(l), in, c.backbone_widths[l], Act::kPrelu);
    in = c.backbone_widths[l];
  }
  const int x_width = in;
  // Source-specific layers: the rec copy starts as an exact copy of the ad
  // copy, so the two sources are indistinguishable before training.
  AddDense(store_, rng, "inv/ad/0", x_width, c.projection_dim, Act::kNone);
  AddDense(store_, rng, "con/ad/0", x_width, c.projection_dim, Act::kNone);
  int h = 2 * c.projection_dim;
  for (std::size_t l = 0; l < c.head_widths.size(); ++l) {
    AddDense(store_, rng, "head/ad/" + std::to_string(l), h, c.head_widths[l], Act::kPrelu);
    h = c.head_widths[l];
  }
  AddDense(store_, rng, "head/ad/" + std::to_string(c.head_widths.size()), h, 1, Act::kNone);
  std::vector<std::pair<std::string, Matrix>> mirrored;
  for (const auto& [name, p] : store_.entries()) {
    for (const char* layer : {"inv/ad/", "con/ad/", "head/ad/"}) {
      if (name.rfind(layer, 0) != 0) continue;
      std::string rec = name;
      rec.replace(rec.find("/ad/"), 4, "/rec/");
      mirrored.emplace_back(rec, p.value);
    }
  }
  for (auto& [name, value] : mirrored) store_.add(name, std::move(value));
  AddDense(store_, rng, "disc/0", c.projection_dim, c.discriminator_width, Act::kRelu);
  AddDense(store_, rng, "disc/1", c.discriminator_width, 1, Act::kNone);
}

Var Rec4AdModel::EmbedAndAggregate(Tape& tape, const BatchTensors& batch) {
  const auto table = [&](const char* name) { return tape.param(store_.get(std::string("emb/") + name)); };
  Var item_table = table("item");
  Var category_table = table("category");
  Var target = ops::ConcatCols({ops::EmbeddingGather(item_table, batch.item),
                                ops::EmbeddingGather(category_table, batch.category)});
  const int len = config_.vocab.max_behavior_len;
  Var behaviors =
      ops::ConcatCols({ops::EmbeddingGather(item_table, batch.behavior_item),
                       ops::EmbeddingGather(category_table, batch.behavior_category)});
  Var target_rep = ops::RepeatRows(target, len);
  Var att_in = ops::ConcatCols({behaviors, target_rep, ops::Mul(behaviors, target_rep)});
  Var hidden = Dense(tape, store_, att_in, "att/0", Act::kPrelu);
  Var scores = Dense(tape, store_, hidden, "att/1", Act::kNone);
  Var weights = ops::MaskedSoftmaxRows(ops::Reshape(scores, batch.size(), len),
                                       batch.behavior_mask);
  Var interest = ops::WeightedSequenceSum(weights, behaviors);

  return ops::ConcatCols({
      ops::EmbeddingGather(table("age"), batch.age),
      ops::EmbeddingGather(table("gender"), batch.gender),
      ops::EmbeddingGather(table("ad"), batch.ad),
      target,
      ops::EmbeddingGather(table("brand"), batch.brand),
      ops::EmbeddingGather(table("campaign"), batch.campaign),
      ops::EmbeddingGather(table("time"), batch.time),
      ops::EmbeddingGather(table("device"), batch.device),
      interest,
  });
}

Var Rec4AdModel::SourceRouted(Tape& tape, Var x, const BatchTensors& batch,
                              const std::string& prefix, int layers, bool prelu,
                              bool per_source) {
  const auto run = [&](Var in, const char* source) {
    Var h = in;
    for (int l = 0; l < layers; ++l) {
      const bool last = l + 1 == layers;
      h = Dense(tape, store_, h, prefix + "/" + source + "/" + std::to_string(l),
                last || !prelu ? Act::kNone : Act::kPrelu);
    }
    return h;
  };
  if (!per_source || batch.rec_rows.empty()) return run(x, "ad");
  if (batch.ad_rows.empty()) return run(x, "rec");
  const Var parts[2] = {run(ops::GatherRows(x, batch.ad_rows), "ad"),
                        run(ops::GatherRows(x, batch.rec_rows), "rec")};
  const std::vector<int> indices[2] = {batch.ad_rows, batch.rec_rows};
  return ops::MergeRows(parts, indices, batch.size());
}

ForwardResult Rec4AdModel::Forward(Tape& tape, const BatchTensors& batch, Mode mode,
                                   bool update_running, bool with_discriminator) {
  if (batch.size() == 0) throw ShapeError("forward: empty batch");
  const ModelConfig& c = config_;
  ForwardResult f;
  f.e = EmbedAndAggregate(tape, batch);
  f.e_norm = SourceAwareBatchNorm(tape, f.e, batch, store_, "sabn", mode, c.bn_momentum, c.bn_eps,
                                  /*shared=*/!c.use_sabn, update_running);
  Var h = f.e_norm;
  for (std::size_t l = 0; l < c.backbone_widths.size(); ++l) {
    h = Dense(tape, store_, h, "backbone/" + std::to_string(l), Act::kPrelu);
  }
  f.x = h;
  f.x_inv = SourceRouted(tape, f.x, batch, "inv", 1, false, c.use_source_heads);
  f.x_con = SourceRouted(tape, f.x, batch, "con", 1, false, c.use_source_heads);
  Var x_new = ops::ConcatCols({f.x_inv, f.x_con});
  Var logit = SourceRouted(tape, x_new, batch, "head",
                           static_cast<int>(c.head_widths.size()) + 1, true, c.use_source_heads);
  f.y_hat = ops::Sigmoid(logit);
  if (with_discriminator) {
    Var r = ops::GradientReversal(f.x_inv, c.alpha);
    Var d = Dense(tape, store_, r, "disc/0", Act::kRelu);
    f.s_hat = ops::Sigmoid(Dense(tape, store_, d, "disc/1", Act::kNone));
  }
  return f;
}

Var AlignmentLoss(Var s_hat, const BatchTensors& batch) {
  if (batch.ad_rows.empty() || batch.rec_rows.empty()) return Var();
  return ops::BinaryCrossEntropy(s_hat, batch.source, ops::Reduction::kSum);
}

Var DecorrelationLoss(Var x_inv, Var x_con, const BatchTensors& batch, double eps) {
  Var l_d;
  for (const std::vector<int>* rows : {&batch.ad_rows, &batch.rec_rows}) {
    if (rows->empty()) continue;
    const bool whole = static_cast<int>(rows->size()) == batch.size();
    Var p = whole ? x_inv : ops::GatherRows(x_inv, *rows);
    Var q = whole ? x_con : ops::GatherRows(x_con, *rows);
    Var term = ops::PearsonPairwisePenalty(p, q, eps);
    l_d = l_d.valid() ? ops::Add(l_d, term) : term;
  }
  if (!l_d.valid()) throw ShapeError("decorrelation: empty batch");
  return l_d;
}

diffcore::GradientCheckReport CertifyGradients(Rec4AdModel& model, const BatchTensors& batch,
                                               const diffcore::GradientCheckOptions& options) {
  const ModelConfig& c = model.config();
  const auto main_terms = [&](Tape& tape) {
    const ForwardResult f = model.Forward(tape, batch, Mode::kTrain, false, false);
    Var loss = ops::BinaryCrossEntropy(f.y_hat, batch.label, batch.weight, ops::Reduction::kSum);
    if (c.use_decorrelation) {
      loss = ops::Add(loss, ops::Scale(DecorrelationLoss(f.x_inv, f.x_con, batch, c.pearson_eps),
                                       c.lambda2));
    }
    return loss;
  };
  const auto alignment = [&](Tape& tape) {
    const ForwardResult f = model.Forward(tape, batch, Mode::kTrain, false, true);
    Var l_a = AlignmentLoss(f.s_hat, batch);
    return l_a.valid() ? l_a : tape.constant(Matrix::Zero(1, 1));
  };
  std::vector<diffcore::ReferenceTerm> reference = {
      {main_terms, [](const std::string&) { return 1.0; }}};
  if (c.use_alignment) {
    reference.push_back({alignment, [&c](const std::string& name) {
                           const bool disc = name.rfind("disc/", 0) == 0;
                           return disc ? c.lambda1 : -c.alpha * c.lambda1;
                         }});
  }
  return diffcore::FiniteDifferenceCheck(
      [&](Tape& tape) { return model.Loss(tape, batch, Mode::kTrain, false).total; }, reference,
      model.params(), options);
}

double CombineLoss(double l_c, double l_a, double l_d, const ModelConfig& config) {
  double total = l_c;
  if (config.use_alignment) total += config.lambda1 * l_a;
  if (config.use_decorrelation) total += config.lambda2 * l_d;
  return total;
}

LossTerms Rec4AdModel::Loss(Tape& tape, const BatchTensors& batch, Mode mode,
                            bool update_running) {
  const ModelConfig& c = config_;
  LossTerms out;
  out.forward = Forward(tape, batch, mode, update_running, c.use_alignment);
  Var total = ops::BinaryCrossEntropy(out.forward.y_hat, batch.label, batch.weight,
                                      ops::Reduction::kSum);
  out.l_c = total.value()(0, 0);
  if (c.use_alignment) {
    Var l_a = AlignmentLoss(out.forward.s_hat, batch);
    if (l_a.valid()) {
      out.l_a = l_a.value()(0, 0);
      total = ops::Add(total, ops::Scale(l_a, c.lambda1));
    }
  }
  if (c.use_decorrelation) {
    Var l_d = DecorrelationLoss(out.forward.x_inv, out.forward.x_con, batch, c.pearson_eps);
    out.l_d = l_d.value()(0, 0);
    total = ops::Add(total, ops::Scale(l_d, c.lambda2));
  }
  out.total = total;
  return out;
}

std::vector<double> Rec4AdModel::Predict(const BatchTensors& batch) {
  Tape tape;
  const ForwardResult f = Forward(tape, batch, Mode::kInfer, false, false);
  const Matrix& y = f.y_hat.value();
  return std::vector<double>(y.data(), y.data() + y.rows());
}

void Rec4AdModel::Save(const std::filesystem::path& path) const {
  std::ofstream out = OpenOut(path);
  store_.save(out, config_.ToHeader());
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

ModelConfig Rec4AdModel::ReadConfig(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  ParameterStore store;
  return ModelConfig::FromHeader(store.load(in));
}

Rec4AdModel Rec4AdModel::Load(const std::filesystem::path& path, const ModelConfig& expected) {
  std::ifstream in = OpenIn(path);
  ParameterStore store;
  const ModelConfig stored = ModelConfig::FromHeader(store.load(in));
  if (!(stored == expected)) {
    throw ConfigError("checkpoint " + path.string() +
                      " was written for a different model config (header mismatch)");
  }
  return Rec4AdModel(stored, std::move(store));
}

void ExportRepresentations(const std::filesystem::path& path, const Matrix& x_inv,
                           const Matrix& x_con, std::span<const double> source) {
  if (x_inv.rows() != x_con.rows() || x_inv.rows() != static_cast<Eigen::Index>(source.size())) {
    throw ShapeError("representation export: row counts differ");
  }
  std::ofstream out = OpenOut(path);
  out << "#row\tsource\tinv[0.." << x_inv.cols() << ")\tcon[0.." << x_con.cols() << ")\n";
  for (Eigen::Index r = 0; r < x_inv.rows(); ++r) {
    out << r << '\t' << (source[r] > 0.5 ? "ad" : "rec");
    for (Eigen::Index k = 0; k < x_inv.cols(); ++k) out << '\t' << FormatDouble(x_inv(r, k));
    for (Eigen::Index k = 0; k < x_con.cols(); ++k) out << '\t' << FormatDouble(x_con(r, k));
    out << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace rec4ad::model
