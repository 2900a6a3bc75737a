#ifndef REC4AD_MODEL_MODEL_H_
#define REC4AD_MODEL_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rec4ad/augment/augmentation.h"
#include "rec4ad/diffcore/gradient_check.h"
#include "rec4ad/diffcore/parameter_store.h"
#include "rec4ad/diffcore/tape.h"

namespace rec4ad::model {

using diffcore::Matrix;
using diffcore::ParameterStore;
using diffcore::Tape;
using diffcore::Var;

// Closed vocabularies of the synthetic world.
struct Vocab {
  int users = 1;
  int ads = 1;
  int items = 1;
  int categories = 1;
  int brands = 1;
  int campaigns = 1;
  int age_buckets = 1;
  int gender_buckets = 1;
  int time_buckets = 1;
  int devices = 1;
  int max_behavior_len = 1;
  friend bool operator==(const Vocab&, const Vocab&) = default;
};

Vocab VocabFromCatalog(const sim::Catalog& catalog);

struct ModelConfig {
  Vocab vocab;
  int embedding_dim = 16;
  int attention_width = 36;
  std::vector<int> backbone_widths = {256, 128};
  int projection_dim = 128;
  std::vector<int> head_widths = {64};
  int discriminator_width = 64;
  double alpha = 0.1;
  double lambda1 = 0.005;
  double lambda2 = 0.5;
  double bn_momentum = 0.99;
  double bn_eps = 1e-5;
  double pearson_eps = 1e-8;

  bool use_sabn = true;
  bool use_alignment = true;
  bool use_decorrelation = true;
  // Per-source projection layers and prediction heads. Off means every row
  // goes through the ad-side layers (one shared network).
  bool use_source_heads = true;

  // Throws ConfigError on d <= 0, negative lambdas or alpha, empty widths.
  void Validate() const;
  // Compact JSON used as the checkpoint header.
  std::string ToHeader() const;
  static ModelConfig FromHeader(const std::string& header);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One mini-batch in column form. Row r of every array belongs to sample r.
struct BatchTensors {
  std::vector<int> user, age, gender, ad, item, category, brand, campaign, time, device;
  // B x L behaviour ids (0 where padded) and the 0/1 validity mask.
  std::vector<int> behavior_item, behavior_category;
  Matrix behavior_mask;
  std::vector<double> label;
  // 1 for ad rows, 0 for rec rows.
  std::vector<double> source;
  // Per-sample loss weights; empty means unit weights.
  std::vector<double> weight;
  std::vector<int> ad_rows, rec_rows;

  int size() const { return static_cast<int>(label.size()); }
};

// Builds a batch from samples[indices[k]]. Throws ShapeError on ids outside
// the vocabulary or behaviour sequences longer than vocab.max_behavior_len.
BatchTensors MakeBatch(std::span<const augment::UnifiedSample> samples,
                       std::span<const int> indices, const Vocab& vocab,
                       std::span<const double> weights = {});
BatchTensors MakeBatch(std::span<const augment::UnifiedSample> samples, const Vocab& vocab);

enum class Mode { kTrain, kInfer };

// Source-aware batch normalisation over the rows of `e`. Parameters live in
// `store` under `<prefix>/{ad,rec}/{gamma,beta,mean,var}`; the mean/var
// entries are non-trainable running statistics. Train mode normalises each
// source by its own batch statistics and (when update_running) folds them
// into the running statistics; infer mode uses the running statistics.
// With shared=true all rows use the ad-side parameters and statistics.
Var SourceAwareBatchNorm(Tape& tape, Var e, const BatchTensors& batch, ParameterStore& store,
                         const std::string& prefix, Mode mode, double momentum, double eps,
                         bool shared, bool update_running);

// Adds the four SABN entries per source for a width-n input.
void AddSabnParameters(ParameterStore& store, const std::string& prefix, int width);

struct ForwardResult {
  Var e;       // concatenated embeddings
  Var e_norm;  // after (SA)BN
  Var x;       // backbone output
  Var x_inv;
  Var x_con;
  Var y_hat;   // B x 1 click probability
  Var s_hat;   // B x 1 discriminator output (P(source = ad)); invalid if not requested
};

struct LossTerms {
  Var total;
  double l_c = 0.0;
  double l_a = 0.0;
  double l_d = 0.0;
  ForwardResult forward;
};

class Rec4AdModel {
 public:
  // Creates every parameter, whatever the switches, in a fixed order from a
  // single stream seeded by `seed`; switches only change the graph.
  Rec4AdModel(const ModelConfig& config, std::uint64_t seed);
  // Wraps an existing store (e.g. a loaded checkpoint).
  Rec4AdModel(const ModelConfig& config, ParameterStore store);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Embedding lookups plus target-conditioned attention over behaviours.
  Var EmbedAndAggregate(Tape& tape, const BatchTensors& batch);

  // Full forward pass. Train mode updates SABN running statistics only when
  // update_running is set. with_discriminator also evaluates s_hat.
  ForwardResult Forward(Tape& tape, const BatchTensors& batch, Mode mode, bool update_running,
                        bool with_discriminator);

  // L = L_C + lambda1 L_A + lambda2 L_D with disabled terms exactly 0.
  // L_C and L_A are sums over the batch; L_D sums the per-source penalties.
  LossTerms Loss(Tape& tape, const BatchTensors& batch, Mode mode, bool update_running);

  // Click probabilities in inference mode, each row routed by its source.
  std::vector<double> Predict(const BatchTensors& batch);

  void Save(const std::filesystem::path& path) const;
  // Throws ConfigError when the stored header differs from `expected`.
  static Rec4AdModel Load(const std::filesystem::path& path, const ModelConfig& expected);
  static ModelConfig ReadConfig(const std::filesystem::path& path);

 private:
  void InitParameters(std::uint64_t seed);
  Var Mlp(Tape& tape, Var x, const std::string& prefix, int layers, bool prelu);
  Var SourceRouted(Tape& tape, Var x, const BatchTensors& batch, const std::string& prefix,
                   int layers, bool prelu, bool per_source);

  ModelConfig config_;
  ParameterStore store_;
};

// -sum_ad log s_hat - sum_rec log(1 - s_hat); invalid Var when the batch
// lacks one of the sources (the term is then 0).
Var AlignmentLoss(Var s_hat, const BatchTensors& batch);

// Pearson penalty between x_inv and x_con over the ad rows plus the same over
// the rec rows; an absent source contributes 0. Throws ShapeError when a
// present source has a single row.
Var DecorrelationLoss(Var x_inv, Var x_con, const BatchTensors& batch, double eps);

// Finite-difference certification of the training gradient of Loss() in
// train mode. The reference is d(L_C + lambda2 L_D) plus lambda1 dL_A for
// discriminator parameters and -alpha lambda1 dL_A for everything upstream
// of the gradient reversal.
diffcore::GradientCheckReport CertifyGradients(Rec4AdModel& model, const BatchTensors& batch,
                                               const diffcore::GradientCheckOptions& options = {});

// Combines raw loss terms as the model does; exposed for logging and tests.
double CombineLoss(double l_c, double l_a, double l_d, const ModelConfig& config);

// Representation export: "row<TAB>source<TAB>x_inv...<TAB>x_con..." lines,
// header line "#row source inv[0..d) con[0..d)".
void ExportRepresentations(const std::filesystem::path& path, const Matrix& x_inv,
                           const Matrix& x_con, std::span<const double> source);

}  // namespace rec4ad::model

#endif  // REC4AD_MODEL_MODEL_H_
