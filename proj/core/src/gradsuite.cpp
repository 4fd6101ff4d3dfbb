#include "leaves/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "leaves/augment.hpp"
#include "leaves/contrastive.hpp"
#include "leaves/encoder.hpp"
#include "leaves/gradcheck.hpp"
#include "leaves/ops.hpp"
#include "leaves/random.hpp"
#include "leaves/tensor.hpp"

namespace leaves {

namespace {

std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform_open();
  return v;
}

// Values bounded away from zero on both sides (relu and similar kinks).
std::vector<double> rand_vec_nonzero(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) {
    const double mag = 0.1 + 0.9 * rng.uniform_open();
    x = rng.uniform_open() < 0.5 ? -mag : mag;
  }
  return v;
}

// Projects a tensor to a scalar with fixed random weights so every output
// coordinate contributes to the checked gradient.
Tensor weighted_scalar(const Tensor& y, const std::vector<double>& w) {
  return sum(mul(y, Tensor(y.shape(), w)));
}

struct Suite {
  Rng rng;
  double step;
  std::vector<GradSuiteResult> results;

  explicit Suite(std::uint64_t seed, double fd_step) : rng(seed), step(fd_step) {}

  using Builder = std::function<Tensor(Tape&, const std::vector<double>&)>;

  // Checks d(weighted scalar of builder output)/dx by central differences.
  void check(const std::string& name, const Shape& x_shape, std::vector<double> x0,
             const Builder& build, double flip_sign = 1.0) {
    Tensor probe;
    {
      Tape tape;
      probe = build(tape, x0);
    }
    const std::vector<double> w = rand_vec(rng, probe.size(), -1.0, 1.0);
    auto value = [&](const std::vector<double>& x) {
      Tape tape;
      Tensor y = build(tape, x);
      return weighted_scalar(y, w).item();
    };
    std::vector<double> analytic;
    {
      Tape tape;
      // The builder registers x as the first leaf on the fresh tape.
      Tensor y = build(tape, x0);
      Tensor s = weighted_scalar(y, w);
      tape.backward(s);
      analytic = grad_of_first_leaf(tape, x0.size());
    }
    for (double& g : analytic) g *= flip_sign;
    GradCheckReport rep = grad_check(value, x0, analytic, step);
    results.push_back({name, rep.max_rel_error});
    (void)x_shape;
  }

  static std::vector<double> grad_of_first_leaf(Tape& tape, std::size_t n) {
    const auto& g = tape.grad_of(0);
    if (g.size() != n) throw ShapeError("gradient suite: unexpected leaf gradient size");
    return g;
  }
};

}  // namespace

std::vector<GradSuiteResult> gradient_suite(std::uint64_t seed, const GradSuiteOptions& options) {
  Suite suite(seed, options.fd_step);
  Rng& rng = suite.rng;

  // Elementwise binary ops with broadcasting, gradient w.r.t. both operands
  // via one concatenated parameter vector.
  const Shape sa{2, 3}, sb{1, 3};
  auto binary_builder = [&](Tensor (*op)(const Tensor&, const Tensor&)) {
    return [op, sa, sb](Tape& tape, const std::vector<double>& x) {
      std::vector<double> va(x.begin(), x.begin() + 6);
      std::vector<double> vb(x.begin() + 6, x.end());
      Tensor xall = tape.leaf(Shape{9}, x, true);
      Tensor a = reshape(gather_lastaxis(xall, {0, 1, 2, 3, 4, 5}), sa);
      Tensor b = reshape(gather_lastaxis(xall, {6, 7, 8}), sb);
      return op(a, b);
    };
  };
  {
    std::vector<double> x0 = rand_vec(rng, 9, -2.0, 2.0);
    suite.check("add", Shape{9}, x0, binary_builder(&add));
    suite.check("sub", Shape{9}, rand_vec(rng, 9, -2.0, 2.0), binary_builder(&sub));
    suite.check("mul", Shape{9}, rand_vec(rng, 9, -2.0, 2.0), binary_builder(&mul));
    suite.check("divide", Shape{9}, rand_vec(rng, 9, 0.5, 2.0), binary_builder(&divide));
  }

  auto unary_builder = [&](Tensor (*op)(const Tensor&)) {
    return [op](Tape& tape, const std::vector<double>& x) {
      return op(tape.leaf(Shape{2, 3}, x, true));
    };
  };
  suite.check("neg", Shape{6}, rand_vec(rng, 6, -2.0, 2.0), unary_builder(&neg));
  suite.check("exp", Shape{6}, rand_vec(rng, 6, -1.5, 1.5), unary_builder(&exp));
  suite.check("log", Shape{6}, rand_vec(rng, 6, 0.2, 3.0), unary_builder(&log));
  suite.check("sqrt", Shape{6}, rand_vec(rng, 6, 0.2, 3.0), unary_builder(&sqrt));
  suite.check("tanh", Shape{6}, rand_vec(rng, 6, -2.0, 2.0), unary_builder(&tanh));
  suite.check("relu", Shape{6}, rand_vec_nonzero(rng, 6), unary_builder(&relu));
  suite.check("logistic", Shape{6}, rand_vec(rng, 6, -2.0, 2.0), unary_builder(&logistic));
  suite.check("softplus", Shape{6}, rand_vec(rng, 6, -2.0, 2.0), unary_builder(&softplus));

  suite.check("sum_axis", Shape{6}, rand_vec(rng, 6, -2.0, 2.0),
              [](Tape& tape, const std::vector<double>& x) {
                return sum(tape.leaf(Shape{2, 3}, x, true), 1);
              });
  suite.check("mean_axis", Shape{6}, rand_vec(rng, 6, -2.0, 2.0),
              [](Tape& tape, const std::vector<double>& x) {
                return mean(tape.leaf(Shape{2, 3}, x, true), 0);
              });
  {
    // Distinct entries keep the argmax away from ties under the FD step.
    std::vector<double> x0 = rand_vec(rng, 6, -2.0, 2.0);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += static_cast<double>(i) * 1e-2;
    suite.check("max_axis", Shape{6}, x0, [](Tape& tape, const std::vector<double>& x) {
      return max(tape.leaf(Shape{2, 3}, x, true), 1);
    });
  }

  suite.check("matmul", Shape{12}, rand_vec(rng, 12, -1.0, 1.0),
              [](Tape& tape, const std::vector<double>& x) {
                Tensor xall = tape.leaf(Shape{12}, x, true);
                Tensor a = reshape(gather_lastaxis(xall, {0, 1, 2, 3, 4, 5}), Shape{2, 3});
                Tensor b = reshape(gather_lastaxis(xall, {6, 7, 8, 9, 10, 11}), Shape{3, 2});
                return matmul(a, b);
              });
  suite.check("transpose_reshape", Shape{6}, rand_vec(rng, 6, -1.0, 1.0),
              [](Tape& tape, const std::vector<double>& x) {
                Tensor a = tape.leaf(Shape{2, 3}, x, true);
                return reshape(transpose2d(a), Shape{2, 3});
              });

  suite.check("conv1d", Shape{28}, rand_vec(rng, 28, -1.0, 1.0),
              [](Tape& tape, const std::vector<double>& x) {
                Tensor xall = tape.leaf(Shape{28}, x, true);
                std::vector<std::size_t> sig_idx(16), w_idx(12);
                for (std::size_t i = 0; i < 16; ++i) sig_idx[i] = i;
                for (std::size_t i = 0; i < 12; ++i) w_idx[i] = 16 + i;
                Tensor sig = reshape(gather_lastaxis(xall, sig_idx), Shape{1, 2, 8});
                Tensor w = reshape(gather_lastaxis(xall, w_idx), Shape{2, 2, 3});
                return conv1d(sig, w, 2, 1);
              });

  {
    std::vector<double> x0 = rand_vec(rng, 16, -1.0, 1.0);
    std::vector<double> locs = rand_vec(rng, 10, -0.9, 0.9);
    x0.insert(x0.end(), locs.begin(), locs.end());
    suite.check("interp1d", Shape{26}, x0, [](Tape& tape, const std::vector<double>& x) {
      Tensor xall = tape.leaf(Shape{26}, x, true);
      std::vector<std::size_t> sig_idx(16), loc_idx(10);
      for (std::size_t i = 0; i < 16; ++i) sig_idx[i] = i;
      for (std::size_t i = 0; i < 10; ++i) loc_idx[i] = 16 + i;
      Tensor sig = reshape(gather_lastaxis(xall, sig_idx), Shape{2, 8});
      Tensor loc = reshape(gather_lastaxis(xall, loc_idx), Shape{2, 5});
      return interp1d(sig, loc);
    });
  }

  {
    std::vector<double> x0 = rand_vec(rng, 8, -2.0, 2.0);
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += static_cast<double>(i) * 1e-2;
    suite.check("sort", Shape{8}, x0, [](Tape& tape, const std::vector<double>& x) {
      return sort_lastaxis(tape.leaf(Shape{2, 4}, x, true)).sorted;
    });
  }
  suite.check("gather_select", Shape{6}, rand_vec(rng, 6, -1.0, 1.0),
              [](Tape& tape, const std::vector<double>& x) {
                Tensor a = tape.leaf(Shape{6}, x, true);
                Tensor g = gather_lastaxis(a, {4, 0, 2, 2});
                return add(g, select(a, 1));
              });

  // Augmentations w.r.t. their raw parameters, noise frozen per check.
  const AugmentBounds bounds;
  const std::size_t n = 2, c = 1, len = 16;
  const NoiseBundle noise = NoiseBundle::generate(rng.next_seed(), n, c, len, bounds);
  const Tensor signal(Shape{n, c, len}, rand_vec(rng, n * c * len, -1.0, 1.0));

  suite.check("jitter", Shape{1}, rand_vec(rng, 1, -1.0, 1.0),
              [&](Tape& tape, const std::vector<double>& x) {
                Tensor raw = tape.leaf(Shape{}, x, true);
                Tensor xin = tape.leaf(signal, false);
                return jitter(xin, mul(logistic(raw), bounds.eta), noise.jitter_eps);
              },
              options.flip_jitter_gradient ? -1.0 : 1.0);
  suite.check("scale", Shape{1}, rand_vec(rng, 1, -1.0, 1.0),
              [&](Tape& tape, const std::vector<double>& x) {
                Tensor raw = tape.leaf(Shape{}, x, true);
                Tensor xin = tape.leaf(signal, false);
                return scale(xin, mul(logistic(raw), bounds.eta), noise.scale_eps);
              });
  suite.check("mag_warp", Shape{1}, rand_vec(rng, 1, -1.0, 1.0),
              [&](Tape& tape, const std::vector<double>& x) {
                Tensor raw = tape.leaf(Shape{}, x, true);
                Tensor xin = tape.leaf(signal, false);
                return mag_warp(xin, mul(logistic(raw), bounds.eta), noise.magw_eps, bounds.knots,
                                bounds.magw_additive);
              });

  // time_distort w.r.t. all 3M GMM raws through attach_params order.
  {
    AugmentParams params(bounds);
    const std::size_t m = bounds.components;
    std::vector<double> x0;
    auto append = [&](const char* name) {
      const auto& v = params.store().by_name(name).value;
      x0.insert(x0.end(), v.begin(), v.end());
    };
    append("gmm_weights_raw");
    append("gmm_means_raw");
    append("gmm_scales_raw");
    for (double& v : x0) v += 0.1 * (rng.uniform_open() - 0.5);
    suite.check("time_distort", Shape{3 * m}, x0, [&, m](Tape& tape, const std::vector<double>& x) {
      Tensor xall = tape.leaf(Shape{3 * m}, x, true);
      std::vector<std::size_t> iw(m), im(m), is(m);
      for (std::size_t i = 0; i < m; ++i) {
        iw[i] = i;
        im[i] = m + i;
        is[i] = 2 * m + i;
      }
      AugmentLeaves leaves;
      leaves.gmm_weights_raw = gather_lastaxis(xall, iw);
      leaves.gmm_means_raw = gather_lastaxis(xall, im);
      leaves.gmm_scales_raw = gather_lastaxis(xall, is);
      Tensor xin = tape.leaf(signal, false);
      return time_distort(xin, leaves, bounds, noise);
    });
  }

  // Composed pipeline w.r.t. every raw parameter except raw_perm, whose hard
  // output is piecewise constant (see header).
  {
    const std::size_t m = bounds.components;
    const std::size_t dim = 3 + 3 * m;
    std::vector<double> x0 = rand_vec(rng, dim, -0.5, 0.5);
    const double raw_perm_value = rng.uniform_open() * 2.0 - 1.0;
    auto build = [&, m, raw_perm_value](Tape& tape, const std::vector<double>& x) {
      Tensor xall = tape.leaf(Shape{dim}, x, true);
      AugmentLeaves leaves;
      leaves.raw_sigma_jitter = select(xall, 0);
      leaves.raw_sigma_scale = select(xall, 1);
      leaves.raw_sigma_magw = select(xall, 2);
      leaves.raw_perm = tape.leaf(Shape{}, {raw_perm_value}, false);
      std::vector<std::size_t> iw(m), im(m), is(m);
      for (std::size_t i = 0; i < m; ++i) {
        iw[i] = 3 + i;
        im[i] = 3 + m + i;
        is[i] = 3 + 2 * m + i;
      }
      leaves.gmm_weights_raw = gather_lastaxis(xall, iw);
      leaves.gmm_means_raw = gather_lastaxis(xall, im);
      leaves.gmm_scales_raw = gather_lastaxis(xall, is);
      Tensor xin = tape.leaf(signal, false);
      return leaves_forward(xin, leaves, bounds, noise);
    };
    suite.check("composed_augment", Shape{dim}, x0, build);
  }

  // Small encoder end to end w.r.t. all trainable weights.
  {
    EncoderConfig ec;
    ec.channels_in = 1;
    ec.block_widths = {2, 3};
    ec.stem_kernel = 3;
    ec.block_kernel = 3;
    ec.projection_dim = 2;
    ec.num_classes = 2;
    Encoder encoder(ec, rng.next_seed());
    const ParamStore& store = encoder.store();
    std::vector<double> x0;
    for (std::size_t i = 0; i < store.count(); ++i)
      if (store[i].trainable) x0.insert(x0.end(), store[i].value.begin(), store[i].value.end());
    const Tensor enc_in(Shape{2, 1, 8}, rand_vec(rng, 16, -1.0, 1.0));

    auto build = [&](Tape& tape, const std::vector<double>& x) {
      Tensor xall = tape.leaf(Shape{x.size()}, x, true);
      std::vector<Tensor> leaves(store.count());
      std::size_t off = 0;
      for (std::size_t i = 0; i < store.count(); ++i) {
        if (!store[i].trainable) continue;
        std::vector<std::size_t> idx(store[i].value.size());
        for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = off + j;
        leaves[i] = reshape(gather_lastaxis(xall, idx), store[i].shape);
        off += idx.size();
      }
      Encoder local = encoder;  // fresh running stats per evaluation
      Tensor xin = tape.leaf(enc_in, false);
      Tensor z = local.encoder_forward(xin, leaves, true);
      return local.projection_forward(z, leaves);
    };
    suite.check("encoder", Shape{x0.size()}, x0, build);
  }

  // NT-Xent w.r.t. the embeddings.
  {
    const std::size_t rows = 4, d = 3;
    std::vector<double> x0 = rand_vec(rng, rows * d, -1.0, 1.0);
    suite.check("nt_xent", Shape{rows * d}, x0, [&](Tape& tape, const std::vector<double>& x) {
      Tensor e = tape.leaf(Shape{rows, d}, x, true);
      return nt_xent(EmbeddingBatch{e, 0.5});
    });
  }

  return suite.results;
}

double gradient_suite_worst(std::uint64_t seed, const GradSuiteOptions& options,
                            GradSuiteResult& worst) {
  const auto results = gradient_suite(seed, options);
  worst = results.front();
  for (const auto& r : results)
    if (r.max_rel_error > worst.max_rel_error) worst = r;
  return worst.max_rel_error;
}

}  // namespace leaves
