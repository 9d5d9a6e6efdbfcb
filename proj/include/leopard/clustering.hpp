#pragma once

#include <cstddef>
#include <vector>

#include "leopard/matrix.hpp"

namespace leopard {

/// One hidden cluster of a latent space: centroid, cardinality, running
/// distance statistics of absorbed samples, and its per-class allegiance row.
struct Cluster {
  Vector centroid;
  std::size_t cardinality = 1;
  double dist_mean = 0.0;
  double dist_std = 0.0;
  Vector allegiance;

  // Welford accumulators for the distance statistics.
  std::size_t dist_count = 0;
  double dist_m2 = 0.0;
  // Momentum buffer for the centroid (the centroid is a trainable parameter).
  Vector velocity;

  explicit Cluster(Vector c = {}) : centroid(std::move(c)) {
    velocity.assign(centroid.size(), 0.0);
  }
  void absorb_distance(double d);
};

/// Student-t similarity of samples against clusters. Rows sum to one and are
/// strictly positive; the winner is the argmax (ties to the lowest index).
struct SoftAssignment {
  Matrix phi;                        // samples x clusters
  std::vector<std::size_t> winners;  // one per sample
};

struct PredictionTrace {
  std::vector<Vector> local_scores;  // one per contributing layer
  Vector global_score;
  int predicted = 0;
  std::size_t skipped_layers = 0;  // layers without clusters, left out of the sum
};

/// Similarity row for one latent vector: phi_j proportional to
/// (1 + ||h - C_j||^2 / lambda)^(-(lambda+1)/2), normalized over clusters.
Vector similarity(const Vector& h, const std::vector<Cluster>& clusters, double lambda);

SoftAssignment soft_assign(const Matrix& latents, const std::vector<Cluster>& clusters,
                           double lambda);

std::size_t winner_index(const Vector& phi_row);

/// Auxiliary target: squares the assignment and renormalizes by per-cluster
/// frequency, sharpening confident rows.
Matrix target_distribution(const Matrix& phi);

struct KlResult {
  double loss = 0.0;
  Matrix dlatents;    // samples x latent dim
  Matrix dcentroids;  // clusters x latent dim
};

/// KL(phi | target) summed over samples and clusters, with gradients through
/// the student-t kernel to both the latents and every centroid. The target is
/// treated as constant.
KlResult kl_loss(const Matrix& latents, const std::vector<Cluster>& clusters,
                 const Matrix& target, double lambda);

double kl_value(const Matrix& phi, const Matrix& target);

/// Recomputes every cluster's allegiance row from labelled latents: row j is
/// the per-class share of cluster j's total similarity mass.
void update_allegiance(std::vector<Cluster>& clusters, const Matrix& latents,
                       const std::vector<int>& labels, std::size_t n_classes,
                       double lambda);

/// Streams one latent through the cluster set. Grows a new cluster when the
/// nearest one is farther than its own coverage span mu_D + k1*sigma_D with
/// k1 = 2*exp(-distance) + 2; otherwise the winner absorbs the sample. The
/// first-ever sample bootstraps the set. Returns true when a cluster was added.
bool maybe_grow_cluster(std::vector<Cluster>& clusters, const Vector& h);

}  // namespace leopard
