#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "leopard/checkpoint.hpp"
#include "leopard/errors.hpp"
#include "leopard/network.hpp"
#include "leopard/numerics.hpp"

using namespace leopard;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 3) {
  ModelConfig c;
  c.source_dim = 3;
  c.target_dim = 4;
  c.adapter_dim = 3;
  c.extractor_width1 = 4;
  c.extractor_width2 = 3;
  c.initial_layer_width = 3;
  c.dc_hidden_width = 3;
  c.init_seed = seed;
  return c;
}

Matrix random_batch(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.1, 0.9);
  Matrix m(n, dim);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

double recon_loss(const LeopardModel& model, const Matrix& x, Domain domain) {
  const ExtractorCache ex = extractor_forward(model, x, domain);
  const SaeCache sae = sae_encode(model, ex.z, model.depth());
  const EndToEndCache e2e = end_to_end_decode(model, ex, sae);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = e2e.xhat.data()[i] - x.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(x.rows() * x.cols());
}

// FD sweep over every parameter that the analytic map contains.
void check_grads(const LeopardModel& model, const GradMap& analytic,
                 const std::function<double(const LeopardModel&)>& loss) {
  for (const auto& [name, grad] : analytic) {
    const Matrix base = get_param_value(model, name);
    const Matrix fd = finite_diff_gradient(
        [&](const Matrix& probe) {
          LeopardModel m = model;
          set_param_value(m, name, probe);
          return loss(m);
        },
        base, kFiniteDiffStep);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      INFO("param ", name, " coordinate ", i);
      CHECK(relative_error(grad.data()[i], fd.data()[i]) < kGradCheckTolerance);
    }
  }
}

}  // namespace

TEST_CASE("encode with identity weights passes nonnegative input through") {
  LeopardModel m = build_model(tiny_config());
  LayerState& l = m.layers[0];
  l.weight = Param(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  l.bias = Param(Matrix(1, 3, 0.0));
  const std::vector<Vector> h = encode(m, {0.5, 0.2, 0.7}, 1);
  CHECK(h[0] == Vector{0.5, 0.2, 0.7});
}

TEST_CASE("encode clips negatives through the rectifier") {
  LeopardModel m = build_model(tiny_config());
  m.layers[0].weight = Param(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  m.layers[0].bias = Param(Matrix(1, 3, 0.0));
  const std::vector<Vector> h = encode(m, {-1.0, 2.0, 0.0}, 1);
  CHECK(h[0] == Vector{0.0, 2.0, 0.0});
}

TEST_CASE("encode matches the hand-computed single layer") {
  ModelConfig c = tiny_config();
  c.extractor_width2 = 2;
  LeopardModel m = build_model(c);
  m.layers[0].weight = Param(Matrix::from_rows({{1.0, 1.0}}));
  m.layers[0].bias = Param(Matrix(1, 1, -1.0));
  const std::vector<Vector> h = encode(m, {1.0, 1.0}, 1);
  CHECK(h[0] == Vector{1.0});
}

TEST_CASE("encode rejects excessive depth") {
  LeopardModel m = build_model(tiny_config());
  CHECK_THROWS_AS(encode(m, {0.1, 0.2, 0.3}, 5), std::invalid_argument);
}

TEST_CASE("decode at zero input exposes the output activation") {
  LeopardModel m = build_model(tiny_config());
  m.layers[0].weight = Param(Matrix(3, 3, 0.0));
  m.layers[0].dec_bias = Param(Matrix(1, 3, 0.0));
  const Vector rect = decode(m, {0, 0, 0}, 0, Activation::Rectifier);
  const Vector sig = decode(m, {0, 0, 0}, 0, Activation::Sigmoid);
  for (double v : rect) CHECK(v == 0.0);
  for (double v : sig) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("decoder reflects encoder mutations with no separate matrix") {
  LeopardModel m = build_model(tiny_config());
  const Vector before = decode(m, {1.0, 0.0, 0.0}, 0);
  m.layers[0].weight.value(0, 1) += 2.0;
  const Vector after = decode(m, {1.0, 0.0, 0.0}, 0);
  CHECK(after[1] != before[1]);
  // decode output must equal relu(W^T h + c) computed by hand
  const Vector manual = [&] {
    Vector v = matvec_transpose(m.layers[0].weight.value, {1.0, 0.0, 0.0});
    for (std::size_t j = 0; j < v.size(); ++j)
      v[j] = relu(v[j] + m.layers[0].dec_bias.value(0, j));
    return v;
  }();
  CHECK(after == manual);
}

TEST_CASE("decode matches the hand-computed value") {
  ModelConfig c = tiny_config();
  c.extractor_width2 = 1;
  c.initial_layer_width = 1;
  LeopardModel m = build_model(c);
  m.layers[0].weight = Param(Matrix::from_rows({{2.0}}));
  m.layers[0].dec_bias = Param(Matrix(1, 1, 0.0));
  const Vector rec = decode(m, {1.0}, 0, Activation::Rectifier);
  CHECK(rec == Vector{2.0});
}

TEST_CASE("domain classifier outputs exactly one half with zero weights") {
  LeopardModel m = build_model(tiny_config());
  m.domain_classifier.hidden_w = Param(Matrix(3, 3, 0.0));
  m.domain_classifier.hidden_b = Param(Matrix(1, 3, 0.0));
  m.domain_classifier.out_w = Param(Matrix(1, 3, 0.0));
  m.domain_classifier.out_b = Param(Matrix(1, 1, 0.0));
  CHECK(domain_forward(m, {0.4, 0.5, 0.6}) == doctest::Approx(0.5));
}

TEST_CASE("domain classifier output stays strictly inside (0,1)") {
  LeopardModel m = build_model(tiny_config());
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  for (int i = 0; i < 200; ++i) {
    const double p = domain_forward(m, {dist(rng), dist(rng), dist(rng)});
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("sigmoid of logit two") {
  LeopardModel m = build_model(tiny_config());
  m.domain_classifier.hidden_w = Param(Matrix::from_rows({{1, 0, 0}, {0, 0, 0}, {0, 0, 0}}));
  m.domain_classifier.hidden_b = Param(Matrix(1, 3, 0.0));
  m.domain_classifier.out_w = Param(Matrix::from_rows({{1.0, 0.0, 0.0}}));
  m.domain_classifier.out_b = Param(Matrix(1, 1, 0.0));
  CHECK(domain_forward(m, {2.0, 0.0, 0.0}) == doctest::Approx(0.8808).epsilon(1e-4));
}

TEST_CASE("gradient reversal negates and scales") {
  const Matrix g = Matrix::from_rows({{1.0, -2.0}});
  const Matrix r = reverse_gradient(g, 0.1);
  CHECK(r(0, 0) == doctest::Approx(-0.1));
  CHECK(r(0, 1) == doctest::Approx(0.2));
  const Matrix zero = reverse_gradient(g, 0.0);
  CHECK(zero(0, 0) == 0.0);
  CHECK(zero(0, 1) == 0.0);
}

TEST_CASE("double reversal composes to alpha squared") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  Matrix g(2, 3);
  for (double& x : g.data()) x = dist(rng);
  const double alpha = 0.7;
  const Matrix twice = reverse_gradient(reverse_gradient(g, alpha), alpha);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(twice.data()[i] == doctest::Approx(alpha * alpha * g.data()[i]));
}

TEST_CASE("zero gradients leave parameters unchanged") {
  LeopardModel m = build_model(tiny_config());
  const Matrix before = get_param_value(m, "sae.0.w");
  GradMap grads;
  grads.emplace("sae.0.w", Matrix(3, 3, 0.0));
  apply_updates(m, grads, ParamGroup::Classifier);
  CHECK(get_param_value(m, "sae.0.w") == before);
}

TEST_CASE("sequential cluster and reversed cd steps realize the combined update") {
  // Scalar weight, both gradients 1, mu=0.01, alpha1=0.1, no momentum:
  // delta = -mu*(g_cluster - alpha1*g_cd) = -0.009.
  LeopardModel m = build_model(tiny_config());
  m.learning_rate = 0.01;
  m.momentum = 0.0;
  const double before = get_param_value(m, "extractor.1.w")(0, 0);
  GradMap cluster;
  Matrix g(m.extractor.w1.value.rows(), m.extractor.w1.value.cols(), 0.0);
  g(0, 0) = 1.0;
  cluster.emplace("extractor.1.w", g);
  apply_updates(m, cluster, ParamGroup::Extractor);
  GradMap cd;
  cd.emplace("extractor.1.w", reverse_gradient(g, 0.1));
  apply_updates(m, cd, ParamGroup::Extractor);
  CHECK(get_param_value(m, "extractor.1.w")(0, 0) == doctest::Approx(before - 0.009));
}

TEST_CASE("non-finite gradients raise a numeric failure") {
  LeopardModel m = build_model(tiny_config());
  GradMap grads;
  Matrix g(3, 3, 0.0);
  g(1, 1) = std::numeric_limits<double>::quiet_NaN();
  grads.emplace("sae.0.w", g);
  CHECK_THROWS_AS(apply_updates(m, grads, ParamGroup::Classifier), NumericError);
}

TEST_CASE("grow_node extends every coupled structure") {
  LeopardModel m = build_model(tiny_config());
  add_layer(m, 99);  // second layer so the column growth path is exercised
  m.layers[0].clusters.emplace_back(Vector{0.1, 0.2, 0.3});
  m.layers[0].clusters.emplace_back(Vector{0.4, 0.5, 0.6});

  const std::size_t upstream_cols = m.layers[1].weight.value.cols();
  const Matrix batch = random_batch(6, 3, 4);
  grow_node(m, 0, batch, 17);

  CHECK(m.layers[0].width() == 4);
  CHECK(m.layers[0].bias.value.cols() == 4);
  CHECK(m.layers[1].weight.value.cols() == upstream_cols + 1);
  CHECK(m.layers[1].dec_bias.value.cols() == upstream_cols + 1);
  for (const Cluster& c : m.layers[0].clusters) {
    CHECK(c.centroid.size() == 4);
    CHECK(c.velocity.size() == 4);
  }
  CHECK(m.layers[0].contrib_mean.size() == 4);

  // forward passes stay finite and shape-consistent
  const Vector z = extract_features(m, {0.2, 0.3, 0.4}, Domain::Source);
  const std::vector<Vector> h = encode(m, z, 2);
  CHECK(h[0].size() == 4);
  CHECK(h[1].size() == m.layers[1].width());
  CHECK(all_finite(h[1]));
}

TEST_CASE("grow_node on a zero batch seeds a zero centroid coordinate") {
  LeopardModel m = build_model(tiny_config());
  m.layers[0].clusters.emplace_back(Vector{0.1, 0.2, 0.3});
  grow_node(m, 0, Matrix(4, 3, 0.0), 23);
  CHECK(m.layers[0].clusters[0].centroid[3] == 0.0);
}

TEST_CASE("prune_node keeps downstream shapes consistent") {
  LeopardModel m = build_model(tiny_config());
  add_layer(m, 5);
  grow_node(m, 0, Matrix(0, 3, 0.0), 7);
  grow_node(m, 0, Matrix(0, 3, 0.0), 8);  // width 5
  m.layers[0].clusters.emplace_back(Vector(5, 0.5));
  const std::size_t upstream_cols = m.layers[1].weight.value.cols();

  CHECK(prune_node(m, 0, 2));
  CHECK(m.layers[0].width() == 4);
  CHECK(m.layers[1].weight.value.cols() == upstream_cols - 1);
  CHECK(m.layers[0].clusters[0].centroid.size() == 4);

  const Vector z = extract_features(m, {0.2, 0.3, 0.4}, Domain::Source);
  CHECK(encode(m, z, 1)[0].size() == 4);
}

TEST_CASE("prune_node is suppressed at the two-node floor") {
  ModelConfig c = tiny_config();
  c.initial_layer_width = 2;
  LeopardModel m = build_model(c);
  CHECK(!prune_node(m, 0, 0));
  CHECK(m.layers[0].width() == 2);
  CHECK(m.prune_suppressed == 1);
}

TEST_CASE("add_layer halves the previous width") {
  ModelConfig c = tiny_config();
  c.initial_layer_width = 96;
  LeopardModel m = build_model(c);
  add_layer(m, 1);
  CHECK(m.layers.back().width() == 48);
  CHECK(m.layers.back().input_dim() == 96);

  ModelConfig c2 = tiny_config();
  c2.initial_layer_width = 3;
  LeopardModel m2 = build_model(c2);
  add_layer(m2, 1);
  CHECK(m2.layers.back().width() == 2);  // floor with minimum
  CHECK(m2.depth() == 2);
}

TEST_CASE("tied-weight invariant survives mixed updates and mutations") {
  LeopardModel m = build_model(tiny_config(11));
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  m.layers[0].clusters.emplace_back(Vector{0.1, 0.1, 0.1});

  for (int step = 0; step < 500; ++step) {
    const int op = step % 5;
    if (op == 0) {
      GradMap grads;
      for (std::size_t l = 0; l < m.depth(); ++l) {
        const std::string key = "sae." + std::to_string(l) + ".";
        Matrix g(m.layers[l].weight.value.rows(), m.layers[l].weight.value.cols());
        for (double& x : g.data()) x = dist(rng);
        grads.emplace(key + "w", g);
      }
      apply_updates(m, grads, ParamGroup::Classifier);
    } else if (op == 1) {
      grow_node(m, rng() % m.depth(), Matrix(0, 0, 0.0), rng());
    } else if (op == 2) {
      const std::size_t l = rng() % m.depth();
      if (m.layers[l].width() > 2) prune_node(m, l, rng() % m.layers[l].width());
    } else if (op == 3 && m.depth() < 4) {
      add_layer(m, rng());
    }

    // The decode path must equal relu(W_enc^T h + c) for every layer.
    for (std::size_t l = 0; l < m.depth(); ++l) {
      Vector h(m.layers[l].width());
      for (double& x : h) x = dist(rng) + 0.6;
      const Vector via_decode = decode(m, h, l);
      Vector manual = matvec_transpose(m.layers[l].weight.value, h);
      for (std::size_t j = 0; j < manual.size(); ++j)
        manual[j] = relu(manual[j] + m.layers[l].dec_bias.value(0, j));
      REQUIRE(via_decode == manual);
      REQUIRE(m.layers[l].weight.velocity.same_shape(m.layers[l].weight.value));
    }
  }
}

TEST_CASE("end-to-end reconstruction gradients match finite differences") {
  const LeopardModel m = build_model(tiny_config(21));
  const Matrix xs = random_batch(3, 3, 31);

  const ExtractorCache ex = extractor_forward(m, xs, Domain::Source);
  const SaeCache sae = sae_encode(m, ex.z, m.depth());
  const EndToEndCache e2e = end_to_end_decode(m, ex, sae);
  Matrix dxhat(xs.rows(), xs.cols());
  const double denom = static_cast<double>(xs.rows() * xs.cols());
  for (std::size_t i = 0; i < dxhat.size(); ++i)
    dxhat.data()[i] = 2.0 * (e2e.xhat.data()[i] - xs.data()[i]) / denom;
  GradMap grads;
  end_to_end_backward(m, ex, sae, e2e, dxhat, grads);

  check_grads(m, grads, [&](const LeopardModel& probe) {
    return recon_loss(probe, xs, Domain::Source);
  });
}

TEST_CASE("end-to-end gradients with two layers and the target adapter") {
  LeopardModel m = build_model(tiny_config(41));
  add_layer(m, 43);
  const Matrix xt = random_batch(4, 4, 51);

  const ExtractorCache ex = extractor_forward(m, xt, Domain::Target);
  const SaeCache sae = sae_encode(m, ex.z, m.depth());
  const EndToEndCache e2e = end_to_end_decode(m, ex, sae);
  Matrix dxhat(xt.rows(), xt.cols());
  const double denom = static_cast<double>(xt.rows() * xt.cols());
  for (std::size_t i = 0; i < dxhat.size(); ++i)
    dxhat.data()[i] = 2.0 * (e2e.xhat.data()[i] - xt.data()[i]) / denom;
  GradMap grads;
  end_to_end_backward(m, ex, sae, e2e, dxhat, grads);

  check_grads(m, grads, [&](const LeopardModel& probe) {
    return recon_loss(probe, xt, Domain::Target);
  });
}

TEST_CASE("layer-wise reconstruction gradients match finite differences") {
  const LeopardModel m = build_model(tiny_config(61));
  const Matrix h_prev = random_batch(5, 3, 71);

  const LayerReconCache cache = layer_recon_forward(m, 0, h_prev);
  const double denom = static_cast<double>(h_prev.rows() * h_prev.cols());
  Matrix drec(cache.rec.rows(), cache.rec.cols());
  for (std::size_t i = 0; i < drec.size(); ++i)
    drec.data()[i] = 2.0 * (cache.rec.data()[i] - h_prev.data()[i]) / denom;
  GradMap grads;
  layer_recon_backward(m, 0, cache, drec, Matrix(), grads);

  check_grads(m, grads, [&](const LeopardModel& probe) {
    const LayerReconCache c = layer_recon_forward(probe, 0, h_prev);
    double s = 0.0;
    for (std::size_t i = 0; i < h_prev.size(); ++i) {
      const double d = c.rec.data()[i] - h_prev.data()[i];
      s += d * d;
    }
    return s / denom;
  });
}

TEST_CASE("domain classifier gradients match finite differences") {
  const LeopardModel m = build_model(tiny_config(81));
  const Matrix xs = random_batch(4, 3, 91);

  auto loss = [&xs](const LeopardModel& probe) {
    const ExtractorCache ex = extractor_forward(probe, xs, Domain::Source);
    const DomainClassifierCache dc = domain_forward_batch(probe, ex.z);
    double s = 0.0;
    for (std::size_t i = 0; i < dc.p.rows(); ++i)
      s += -std::log(dc.p(i, 0)) / static_cast<double>(dc.p.rows());
    return s;
  };

  const ExtractorCache ex = extractor_forward(m, xs, Domain::Source);
  const DomainClassifierCache dc = domain_forward_batch(m, ex.z);
  Matrix dlogit(dc.p.rows(), 1);
  for (std::size_t i = 0; i < dc.p.rows(); ++i)
    dlogit(i, 0) = (dc.p(i, 0) - 1.0) / static_cast<double>(dc.p.rows());
  GradMap grads;
  Matrix dz;
  domain_backward(m, ex.z, dc, dlogit, grads, &dz);
  extractor_backward(m, ex, dz, grads);

  check_grads(m, grads, loss);
}

TEST_CASE("predict aggregates local scores and breaks ties low") {
  LeopardModel m = build_model(tiny_config());
  add_layer(m, 3);
  Cluster c0(Vector(3, 0.0));
  c0.allegiance = {0.7, 0.3};
  m.layers[0].clusters.push_back(c0);
  Cluster c1(Vector(m.layers[1].width(), 0.0));
  c1.allegiance = {0.4, 0.6};
  m.layers[1].clusters.push_back(c1);

  const PredictionTrace trace = predict(m, {0.2, 0.3, 0.4}, Domain::Source);
  CHECK(trace.local_scores.size() == 2);
  CHECK(trace.global_score[0] == doctest::Approx(1.1));
  CHECK(trace.global_score[1] == doctest::Approx(0.9));
  CHECK(trace.predicted == 0);

  // uniform rows tie toward the lowest class index
  m.layers[0].clusters[0].allegiance = {0.5, 0.5};
  m.layers[1].clusters[0].allegiance = {0.5, 0.5};
  CHECK(predict(m, {0.2, 0.3, 0.4}, Domain::Source).predicted == 0);
}

TEST_CASE("predict skips layers without clusters") {
  LeopardModel m = build_model(tiny_config());
  add_layer(m, 3);
  Cluster c0(Vector(3, 0.0));
  c0.allegiance = {0.2, 0.8};
  m.layers[0].clusters.push_back(c0);
  const PredictionTrace trace = predict(m, {0.2, 0.3, 0.4}, Domain::Source);
  CHECK(trace.skipped_layers == 1);
  CHECK(trace.predicted == 1);
}

TEST_CASE("checkpoint round-trips exactly") {
  LeopardModel m = build_model(tiny_config(77));
  add_layer(m, 5);
  m.layers[0].clusters.emplace_back(Vector{0.1, 0.2, 0.3});
  m.layers[0].clusters[0].allegiance = {0.25, 0.75};
  m.layers[0].clusters[0].absorb_distance(0.4);
  grow_node(m, 0, random_batch(4, 3, 5), 6);
  observe_layer(m.layers[0].spc, {0.1, 0.2, 0.3}, {0.2, 0.2, 0.2});

  const std::string once = model_to_json(m);
  const LeopardModel restored = model_from_json(once);
  CHECK(model_to_json(restored) == once);
  CHECK(state_signature(restored) == state_signature(m));

  // behavioral equality
  const Vector x{0.3, 0.6, 0.1};
  const Vector z1 = extract_features(m, x, Domain::Source);
  const Vector z2 = extract_features(restored, x, Domain::Source);
  CHECK(z1 == z2);

  const std::string path = "/tmp/leopard_checkpoint_test.json";
  save_model(m, path);
  const LeopardModel from_disk = load_model(path);
  CHECK(model_to_json(from_disk) == once);
}
