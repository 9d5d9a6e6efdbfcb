#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "leopard/clustering.hpp"
#include "leopard/matrix.hpp"
#include "leopard/numerics.hpp"
#include "leopard/stream.hpp"
#include "leopard/structure.hpp"

namespace leopard {

enum class Activation { Rectifier, Sigmoid };
enum class ParamGroup { Extractor, Classifier, DomainClassifier };

double relu(double x);
double sigmoid(double x);

/// Stream-specific linear input adapter: maps a raw feature vector onto the
/// shared trunk dimension. The decode bias belongs to the tied reconstruction
/// path back into raw space.
struct StreamAdapter {
  Param weight;    // shared_dim x raw_dim
  Param bias;      // 1 x shared_dim
  Param dec_bias;  // 1 x raw_dim
};

/// Two rectifier dense layers shared by both streams, with free decode biases
/// for the tied-weight reconstruction path.
struct FeatureExtractor {
  StreamAdapter source_adapter;
  StreamAdapter target_adapter;
  Param w1, b1, c1;  // c1: decode bias back toward adapter space
  Param w2, b2, c2;  // c2: decode bias back toward layer-1 space

  std::size_t natural_dim() const { return w2.value.rows(); }
  std::size_t shared_dim() const { return w1.value.cols(); }
  const StreamAdapter& adapter(Domain d) const {
    return d == Domain::Source ? source_adapter : target_adapter;
  }
  StreamAdapter& adapter(Domain d) {
    return d == Domain::Source ? source_adapter : target_adapter;
  }
};

/// One self-evolving autoencoder layer. The decoder weight matrix is always
/// the transpose of `weight`; only the decode bias is free.
struct LayerState {
  Param weight;    // R_l x u_l
  Param bias;      // 1 x R_l
  Param dec_bias;  // 1 x u_l
  std::vector<Cluster> clusters;
  SpcStats spc;
  Vector contrib_mean;  // running mean |activation| per node
  std::vector<std::size_t> contrib_n;

  std::size_t width() const { return weight.value.rows(); }
  std::size_t input_dim() const { return weight.value.cols(); }
  void note_activation(const Vector& h);
};

struct DomainClassifier {
  Param hidden_w;  // hidden x natural_dim
  Param hidden_b;  // 1 x hidden
  Param out_w;     // 1 x hidden
  Param out_b;     // 1 x 1
};

struct ModelConfig {
  std::size_t source_dim = 4;
  std::size_t target_dim = 6;
  std::size_t adapter_dim = 8;
  std::size_t extractor_width1 = 32;
  std::size_t extractor_width2 = 16;  // natural feature dimension u'
  std::size_t initial_layer_width = 8;
  std::size_t dc_hidden_width = 16;
  std::uint64_t init_seed = 1;
};

struct LeopardModel {
  ModelConfig config;
  FeatureExtractor extractor;
  std::vector<LayerState> layers;
  DomainClassifier domain_classifier;

  double learning_rate = 0.01;
  double momentum = 0.95;
  double lambda = 1.0;

  std::size_t prune_suppressed = 0;

  std::size_t depth() const { return layers.size(); }
};

LeopardModel build_model(const ModelConfig& config);

// ---- single-vector inference ----

/// Raw input -> natural features Z through the stream's adapter and the
/// shared rectifier trunk.
Vector extract_features(const LeopardModel& model, const Vector& x, Domain domain);

/// h^l = r(W^l h^{l-1} + b^l) for l = 1..depth, h^0 = Z.
std::vector<Vector> encode(const LeopardModel& model, const Vector& z, std::size_t depth);

/// h_hat^{l-1} = act((W^l)^T h^l + c^l). The rectifier serves the layer-wise
/// reconstructions; the sigmoid variant is used where the end-to-end path
/// reaches a [0,1]-normalized target.
Vector decode(const LeopardModel& model, const Vector& h, std::size_t layer,
              Activation act = Activation::Rectifier);

/// Probability that Z came from the source stream.
double domain_forward(const LeopardModel& model, const Vector& z);

/// Backward map of the gradient reversal layer: grad' = -alpha1 * grad.
/// (The forward map is the identity.)
Matrix reverse_gradient(const Matrix& grad, double alpha1);

PredictionTrace predict(const LeopardModel& model, const Vector& x, Domain domain);

// ---- batch forward caches (training path) ----

struct ExtractorCache {
  Domain domain = Domain::Source;
  Matrix x;             // n x raw_dim
  Matrix a;             // n x shared_dim (linear adapter output)
  Matrix e1_pre, e1;    // n x width1
  Matrix z_pre, z;      // n x natural_dim
};

ExtractorCache extractor_forward(const LeopardModel& model, const Matrix& x, Domain domain);

struct SaeCache {
  std::vector<Matrix> pre;   // l-1 -> n x R_l
  std::vector<Matrix> post;  // l-1 -> n x R_l
};

SaeCache sae_encode(const LeopardModel& model, const Matrix& z, std::size_t depth);

struct EndToEndCache {
  std::vector<Matrix> dec_pre;   // l-1 -> n x u_l, pre-activation of h_hat^{l-1}
  std::vector<Matrix> dec_post;  // l-1 -> n x u_l
  Matrix d1_pre, d1;             // n x width1
  Matrix d0_pre, d0;             // n x shared_dim
  Matrix xhat_pre, xhat;         // n x raw_dim (sigmoid output)
};

/// Tied-weight decode from h^depth all the way back to the raw input space.
EndToEndCache end_to_end_decode(const LeopardModel& model, const ExtractorCache& ex,
                                const SaeCache& sae);

struct DomainClassifierCache {
  Matrix q_pre, q;  // n x hidden
  Matrix logit;     // n x 1 (clamped)
  Matrix p;         // n x 1
};

DomainClassifierCache domain_forward_batch(const LeopardModel& model, const Matrix& z);

// ---- hand-derived backward passes ----

/// Gradients are keyed by parameter name (see param_names); entries
/// accumulate across calls so several losses can share one map.
using GradMap = std::map<std::string, Matrix>;

void accumulate_grad(GradMap& grads, const std::string& name, const Matrix& g);

/// Backprop of the encode-side extractor given dL/dZ.
void extractor_backward(const LeopardModel& model, const ExtractorCache& ex,
                        const Matrix& dz, GradMap& grads);

/// Backprop of the full reconstruction path given dL/dxhat: through the tied
/// decode chain, the encoder stack, and the extractor. Touches every
/// Extractor and Classifier weight on the path.
void end_to_end_backward(const LeopardModel& model, const ExtractorCache& ex,
                         const SaeCache& sae, const EndToEndCache& e2e,
                         const Matrix& dxhat, GradMap& grads);

struct LayerReconCache {
  Matrix h_prev;        // n x u_l (treated as constant input)
  Matrix pre, h;        // n x R_l
  Matrix rec_pre, rec;  // n x u_l
};

LayerReconCache layer_recon_forward(const LeopardModel& model, std::size_t layer,
                                    const Matrix& h_prev);

/// Backprop of one layer's reconstruction term plus an extra gradient
/// arriving at h^l (the KL path). Gradients stop at h^{l-1}.
void layer_recon_backward(const LeopardModel& model, std::size_t layer,
                          const LayerReconCache& cache, const Matrix& drec,
                          const Matrix& dh_extra, GradMap& grads);

/// Backprop of the domain classifier given dL/dlogit; emits dL/dZ through
/// `dz` for the caller to push into the extractor (usually reversed).
void domain_backward(const LeopardModel& model, const Matrix& z,
                     const DomainClassifierCache& cache, const Matrix& dlogit,
                     GradMap& grads, Matrix* dz);

// ---- parameter registry ----

std::vector<std::string> param_names(const LeopardModel& model,
                                     std::optional<ParamGroup> group = std::nullopt);
ParamGroup param_group(const std::string& name);
Matrix get_param_value(const LeopardModel& model, const std::string& name);
void set_param_value(LeopardModel& model, const std::string& name, const Matrix& value);

/// One heavy-ball step per named gradient belonging to the group. Throws
/// NumericError when any gradient entry is non-finite; callers skip the batch.
void apply_updates(LeopardModel& model, const GradMap& grads, ParamGroup group);

// ---- structural mutation ----

/// Appends one Xavier-initialized node to layer `layer`. The next layer gains
/// an input column and a decode-bias entry; every centroid of `layer` gains a
/// coordinate set to the new node's mean activation over `batch_h_prev`.
void grow_node(LeopardModel& model, std::size_t layer, const Matrix& batch_h_prev,
               std::uint64_t rng_seed);

/// Removes one node; no-op (counted) at the two-node floor. Returns whether
/// the prune happened.
bool prune_node(LeopardModel& model, std::size_t layer, std::size_t node);

/// Appends a fresh layer of width max(2, floor(R_L / 2)).
void add_layer(LeopardModel& model, std::uint64_t rng_seed);

}  // namespace leopard
