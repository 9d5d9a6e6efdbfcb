#include "leopard/clustering.hpp"

#include <cmath>
#include <stdexcept>

namespace leopard {

namespace {

constexpr double kZetaGuard = 1e-12;

double kernel(double sq_dist, double lambda) {
  return std::pow(1.0 + sq_dist / lambda, -(lambda + 1.0) / 2.0);
}

double kernel_derivative(double sq_dist, double lambda) {
  return -((lambda + 1.0) / (2.0 * lambda)) *
         std::pow(1.0 + sq_dist / lambda, -(lambda + 3.0) / 2.0);
}

}  // namespace

void Cluster::absorb_distance(double d) {
  ++cardinality;
  ++dist_count;
  const double delta = d - dist_mean;
  dist_mean += delta / static_cast<double>(dist_count);
  dist_m2 += delta * (d - dist_mean);
  dist_std = std::sqrt(dist_m2 / static_cast<double>(dist_count));
}

Vector similarity(const Vector& h, const std::vector<Cluster>& clusters, double lambda) {
  if (clusters.empty()) throw std::logic_error("similarity: empty cluster set");
  if (lambda <= 0.0) throw std::invalid_argument("similarity: lambda must be > 0");
  Vector phi(clusters.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    phi[j] = kernel(squared_distance(h, clusters[j].centroid), lambda);
    total += phi[j];
  }
  for (double& p : phi) p /= total;
  return phi;
}

std::size_t winner_index(const Vector& phi_row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < phi_row.size(); ++j) {
    if (phi_row[j] > phi_row[best]) best = j;
  }
  return best;
}

SoftAssignment soft_assign(const Matrix& latents, const std::vector<Cluster>& clusters,
                           double lambda) {
  SoftAssignment out;
  out.phi = Matrix(latents.rows(), clusters.size());
  out.winners.resize(latents.rows());
  for (std::size_t i = 0; i < latents.rows(); ++i) {
    const Vector row = similarity(latents.row(i), clusters, lambda);
    out.phi.set_row(i, row);
    out.winners[i] = winner_index(row);
  }
  return out;
}

Matrix target_distribution(const Matrix& phi) {
  const std::size_t n = phi.rows();
  const std::size_t k = phi.cols();
  Vector zeta(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) zeta[j] += phi(i, j);
  Matrix target(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = phi(i, j) * phi(i, j) / std::max(zeta[j], kZetaGuard);
      target(i, j) = v;
      total += v;
    }
    for (std::size_t j = 0; j < k; ++j) target(i, j) /= total;
  }
  return target;
}

double kl_value(const Matrix& phi, const Matrix& target) {
  double loss = 0.0;
  for (std::size_t i = 0; i < phi.rows(); ++i)
    for (std::size_t j = 0; j < phi.cols(); ++j)
      loss += phi(i, j) * std::log(phi(i, j) / target(i, j));
  return loss;
}

KlResult kl_loss(const Matrix& latents, const std::vector<Cluster>& clusters,
                 const Matrix& target, double lambda) {
  const std::size_t n = latents.rows();
  const std::size_t k = clusters.size();
  if (target.rows() != n || target.cols() != k)
    throw std::invalid_argument("kl_loss: target shape mismatch");

  KlResult out;
  out.dlatents = Matrix(n, latents.cols(), 0.0);
  out.dcentroids = Matrix(k, latents.cols(), 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    const Vector h = latents.row(i);
    Vector kern(k), sq(k);
    double kern_total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sq[j] = squared_distance(h, clusters[j].centroid);
      kern[j] = kernel(sq[j], lambda);
      kern_total += kern[j];
    }
    Vector phi(k), log_ratio(k);
    double row_kl = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      phi[j] = kern[j] / kern_total;
      log_ratio[j] = std::log(phi[j] / target(i, j));
      row_kl += phi[j] * log_ratio[j];
    }
    out.loss += row_kl;
    // dKL/dkern_j = (log_ratio_j - row_kl) / kern_total, then through the
    // student-t kernel to the squared distances.
    for (std::size_t j = 0; j < k; ++j) {
      const double dkern = (log_ratio[j] - row_kl) / kern_total;
      const double dsq = dkern * kernel_derivative(sq[j], lambda);
      for (std::size_t d = 0; d < h.size(); ++d) {
        const double diff = h[d] - clusters[j].centroid[d];
        out.dlatents(i, d) += dsq * 2.0 * diff;
        out.dcentroids(j, d) -= dsq * 2.0 * diff;
      }
    }
  }
  return out;
}

void update_allegiance(std::vector<Cluster>& clusters, const Matrix& latents,
                       const std::vector<int>& labels, std::size_t n_classes,
                       double lambda) {
  if (clusters.empty()) throw std::logic_error("update_allegiance: empty cluster set");
  std::size_t labelled = 0;
  for (int l : labels) {
    if (l >= 0) ++labelled;
  }
  if (labelled == 0)
    throw std::logic_error("update_allegiance: no labelled prerecorded samples");
  if (labels.size() != latents.rows())
    throw std::invalid_argument("update_allegiance: label count mismatch");

  Matrix mass(clusters.size(), n_classes, 0.0);
  for (std::size_t i = 0; i < latents.rows(); ++i) {
    if (labels[i] < 0) continue;
    const Vector phi = similarity(latents.row(i), clusters, lambda);
    for (std::size_t j = 0; j < clusters.size(); ++j)
      mass(j, static_cast<std::size_t>(labels[i])) += phi[j];
  }
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    double total = 0.0;
    for (std::size_t o = 0; o < n_classes; ++o) total += mass(j, o);
    Vector row(n_classes, 0.0);
    if (total > 0.0) {
      for (std::size_t o = 0; o < n_classes; ++o) row[o] = mass(j, o) / total;
    }
    clusters[j].allegiance = row;
  }
}

bool maybe_grow_cluster(std::vector<Cluster>& clusters, const Vector& h) {
  if (clusters.empty()) {
    clusters.emplace_back(h);
    return true;
  }
  std::size_t winner = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    const double d = std::sqrt(squared_distance(h, clusters[j].centroid));
    if (d < best) {
      best = d;
      winner = j;
    }
  }
  Cluster& win = clusters[winner];
  if (win.dist_count > 0) {
    const double k1 = 2.0 * std::exp(-best) + 2.0;
    if (best > win.dist_mean + k1 * win.dist_std) {
      clusters.emplace_back(h);
      return true;
    }
  }
  win.absorb_distance(best);
  return false;
}

}  // namespace leopard
