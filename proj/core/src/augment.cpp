#include "leaves/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "leaves/ops.hpp"

namespace leaves {

namespace {

double logistic_value(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus_value(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

void check_signal(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("augmentation input must be (N,C,L), got " + shape_str(x.shape()));
}

std::vector<double> to_normal(const std::vector<double>& eps) {
  std::vector<double> z(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) z[i] = inverse_normal_cdf(eps[i]);
  return z;
}

Tensor constant_on(const Tensor& like, Shape shape, std::vector<double> values) {
  Tensor c(std::move(shape), std::move(values));
  if (like.on_tape()) return like.tape()->leaf(c, false);
  return c;
}

// Evenly spaced locations in [-1,1], replicated per (sample, channel).
std::vector<double> uniform_grid(std::size_t rows, std::size_t length) {
  std::vector<double> grid(rows * length);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < length; ++j)
      grid[r * length + j] =
          length > 1 ? -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(length - 1) : 0.0;
  return grid;
}

// Contiguous segment boundaries: segment i covers [floor(i*L/n), floor((i+1)*L/n)).
std::vector<std::size_t> segment_gather_index(std::size_t length, std::size_t segments,
                                              const std::vector<std::size_t>& order) {
  std::vector<std::size_t> idx;
  idx.reserve(length);
  for (std::size_t s : order) {
    const std::size_t lo = s * length / segments;
    const std::size_t hi = (s + 1) * length / segments;
    for (std::size_t j = lo; j < hi; ++j) idx.push_back(j);
  }
  return idx;
}

std::vector<std::size_t> argsort_keys(const std::vector<double>& keys, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return order;
}

}  // namespace

AugmentParams::AugmentParams(AugmentBounds bounds) : bounds_(bounds) {
  if (bounds_.components < 1) throw UsageError("GMM needs at least one component");
  if (bounds_.k_max < 1) throw UsageError("k_max must be at least 1");
  const std::size_t m = bounds_.components;
  // raw 0 puts the effective intensities at eta/2.
  store_.add("raw_sigma_jitter", Shape{}, 0.0);
  store_.add("raw_sigma_scale", Shape{}, 0.0);
  store_.add("raw_sigma_magw", Shape{}, 0.0);
  store_.add("raw_perm", Shape{}, 0.0);
  store_.add("gmm_weights_raw", Shape{m}, 0.0);
  std::vector<double> means(m);
  for (std::size_t i = 0; i < m; ++i)
    means[i] = m > 1 ? -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
  store_.add("gmm_means_raw", Shape{m}, std::move(means));
  // softplus(raw) = 0.5 at raw = log(e^0.5 - 1)
  store_.add("gmm_scales_raw", Shape{m}, std::log(std::exp(0.5) - 1.0));
}

double AugmentParams::sigma_jitter() const {
  return bounds_.eta * logistic_value(store_.by_name("raw_sigma_jitter").value[0]);
}
double AugmentParams::sigma_scale() const {
  return bounds_.eta * logistic_value(store_.by_name("raw_sigma_scale").value[0]);
}
double AugmentParams::sigma_magw() const {
  return bounds_.eta * logistic_value(store_.by_name("raw_sigma_magw").value[0]);
}

std::size_t AugmentParams::segments() const {
  const double relaxed =
      static_cast<double>(bounds_.k_max - 1) * logistic_value(store_.by_name("raw_perm").value[0]);
  return 1 + static_cast<std::size_t>(std::llround(relaxed));
}

std::vector<double> AugmentParams::gmm_weights() const {
  const auto& raw = store_.by_name("gmm_weights_raw").value;
  const double c = *std::max_element(raw.begin(), raw.end());
  std::vector<double> w(raw.size());
  double s = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) s += (w[i] = std::exp(raw[i] - c));
  for (auto& v : w) v /= s;
  return w;
}

std::vector<double> AugmentParams::gmm_means() const {
  return store_.by_name("gmm_means_raw").value;
}

std::vector<double> AugmentParams::gmm_scales() const {
  const auto& raw = store_.by_name("gmm_scales_raw").value;
  std::vector<double> s(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) s[i] = softplus_value(raw[i]);
  return s;
}

NoiseBundle NoiseBundle::generate(std::uint64_t seed, std::size_t batch, std::size_t channels,
                                  std::size_t length, const AugmentBounds& bounds) {
  Rng rng(seed);
  NoiseBundle b;
  b.seed = seed;
  b.batch = batch;
  b.channels = channels;
  b.length = length;
  const std::size_t ncl = batch * channels * length;
  b.jitter_eps = rng.uniform_open(ncl);
  b.scale_eps = rng.uniform_open(batch * channels);
  b.magw_eps = rng.uniform_open(batch * channels * bounds.knots);
  b.gmm_value_eps.resize(bounds.components);
  b.gmm_mix_eps.resize(bounds.components);
  for (std::size_t m = 0; m < bounds.components; ++m) {
    b.gmm_value_eps[m] = rng.uniform_open(ncl);
    b.gmm_mix_eps[m] = rng.uniform_open(ncl);
  }
  b.perm_keys = rng.uniform_open(bounds.k_max);
  b.timew_eps = rng.uniform_open(batch * channels * bounds.knots);
  b.perm_count_eps = rng.uniform_open();
  return b;
}

Tensor reparam_normal(const Tensor& mu, const Tensor& sigma,
                      const std::vector<double>& eps_uniform, const Shape& noise_shape) {
  for (double s : sigma.values())
    if (s < 0.0) throw DomainError("reparam_normal: negative sigma");
  if (eps_uniform.size() != numel(noise_shape))
    throw ShapeError("reparam_normal: eps count does not match noise shape");
  Tensor z = constant_on(mu.on_tape() ? mu : sigma, noise_shape, to_normal(eps_uniform));
  return add(mu, mul(sigma, z));
}

Tensor reparam_uniform(const Tensor& low, const Tensor& high,
                       const std::vector<double>& eps, const Shape& noise_shape) {
  const auto& lv = low.values();
  const auto& hv = high.values();
  if (lv.size() == hv.size()) {
    for (std::size_t i = 0; i < lv.size(); ++i)
      if (lv[i] > hv[i]) throw DomainError("reparam_uniform: low > high");
  }
  if (eps.size() != numel(noise_shape))
    throw ShapeError("reparam_uniform: eps count does not match noise shape");
  Tensor e = constant_on(low.on_tape() ? low : high, noise_shape, eps);
  return add(low, mul(sub(high, low), e));
}

RelaxedBernoulliSample reparam_relaxed_bernoulli(const Tensor& p, double temperature,
                                                 const std::vector<double>& eps,
                                                 const Shape& noise_shape) {
  for (double v : p.values())
    if (!(v > 0.0 && v < 1.0))
      throw DomainError("reparam_relaxed_bernoulli: p must lie in the open interval (0,1)");
  if (temperature <= 0.0) throw DomainError("reparam_relaxed_bernoulli: temperature must be > 0");
  if (eps.size() != numel(noise_shape))
    throw ShapeError("reparam_relaxed_bernoulli: eps count does not match noise shape");
  std::vector<double> logit_eps(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i)
    logit_eps[i] = std::log(eps[i]) - std::log1p(-eps[i]);
  Tensor e = constant_on(p, noise_shape, std::move(logit_eps));
  Tensor logits = divide(add(log(p), e), temperature);
  return RelaxedBernoulliSample{logistic(logits), logits};
}

AugmentLeaves attach_params(Tape& tape, const AugmentParams& params, bool requires_grad) {
  const ParamStore& s = params.store();
  AugmentLeaves l;
  l.raw_sigma_jitter = tape.leaf(Shape{}, s.by_name("raw_sigma_jitter").value, requires_grad);
  l.raw_sigma_scale = tape.leaf(Shape{}, s.by_name("raw_sigma_scale").value, requires_grad);
  l.raw_sigma_magw = tape.leaf(Shape{}, s.by_name("raw_sigma_magw").value, requires_grad);
  l.raw_perm = tape.leaf(Shape{}, s.by_name("raw_perm").value, requires_grad);
  l.gmm_weights_raw = tape.leaf(s.by_name("gmm_weights_raw").shape,
                                s.by_name("gmm_weights_raw").value, requires_grad);
  l.gmm_means_raw = tape.leaf(s.by_name("gmm_means_raw").shape,
                              s.by_name("gmm_means_raw").value, requires_grad);
  l.gmm_scales_raw = tape.leaf(s.by_name("gmm_scales_raw").shape,
                               s.by_name("gmm_scales_raw").value, requires_grad);
  return l;
}

Tensor jitter(const Tensor& x, const Tensor& sigma_j, const std::vector<double>& eps) {
  check_signal(x);
  Tensor zero = constant_on(x, Shape{}, {0.0});
  Tensor noise = reparam_normal(zero, sigma_j, eps, x.shape());
  return add(x, noise);
}

Tensor scale(const Tensor& x, const Tensor& sigma_s, const std::vector<double>& eps) {
  check_signal(x);
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor one = constant_on(x, Shape{}, {1.0});
  Tensor factors = reparam_normal(one, sigma_s, eps, Shape{n, c});
  return mul(x, reshape(factors, Shape{n, c, 1}));
}

Tensor mag_warp(const Tensor& x, const Tensor& sigma_m, const std::vector<double>& eps,
                std::size_t knots, bool additive) {
  check_signal(x);
  if (knots < 2) throw UsageError("mag_warp needs at least 2 knots");
  const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
  Tensor one = constant_on(x, Shape{}, {1.0});
  Tensor knot_values = reparam_normal(one, sigma_m, eps, Shape{n, c, knots});
  // Knots sit at evenly spaced positions including both endpoints; the
  // uniform grid in [-1,1] linearly interpolates them to length L.
  Tensor grid = constant_on(x, Shape{n, c, len}, uniform_grid(n * c, len));
  Tensor curve = interp1d(knot_values, grid);
  return additive ? add(x, curve) : mul(x, curve);
}

Tensor time_distort(const Tensor& x, const AugmentLeaves& leaves, const AugmentBounds& bounds,
                    const NoiseBundle& noise) {
  check_signal(x);
  const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
  const std::size_t m = bounds.components;
  const Shape ncl{n, c, len};

  // log of the normalized mixture weights, numerically shifted.
  const auto& wraw = leaves.gmm_weights_raw.values();
  const double wmax = *std::max_element(wraw.begin(), wraw.end());
  std::vector<Tensor> shifted(m);
  Tensor expsum = constant_on(x, Shape{}, {0.0});
  for (std::size_t i = 0; i < m; ++i) {
    shifted[i] = sub(select(leaves.gmm_weights_raw, i), wmax);
    expsum = add(expsum, exp(shifted[i]));
  }
  Tensor log_norm = log(expsum);

  // Per-component reparameterized draws and relaxed-categorical mix logits.
  std::vector<Tensor> draws(m), logits(m);
  std::vector<double> logit_max(n * c * len, -1e300);
  for (std::size_t i = 0; i < m; ++i) {
    Tensor mu = select(leaves.gmm_means_raw, i);
    Tensor sigma = softplus(select(leaves.gmm_scales_raw, i));
    draws[i] = reparam_normal(mu, sigma, noise.gmm_value_eps[i], ncl);
    std::vector<double> gumbel(noise.gmm_mix_eps[i].size());
    for (std::size_t j = 0; j < gumbel.size(); ++j)
      gumbel[j] = -std::log(-std::log(noise.gmm_mix_eps[i][j]));
    Tensor g = constant_on(x, ncl, std::move(gumbel));
    Tensor log_phi = sub(shifted[i], log_norm);
    logits[i] = divide(add(log_phi, g), bounds.temperature);
    const auto& lv = logits[i].values();
    for (std::size_t j = 0; j < lv.size(); ++j) logit_max[j] = std::max(logit_max[j], lv[j]);
  }

  // Softmax across components; the constant shift leaves it exact.
  Tensor shift = constant_on(x, ncl, std::move(logit_max));
  std::vector<Tensor> unnorm(m);
  Tensor denom = constant_on(x, Shape{}, {0.0});
  for (std::size_t i = 0; i < m; ++i) {
    unnorm[i] = exp(sub(logits[i], shift));
    denom = add(denom, unnorm[i]);
  }
  Tensor mixed = constant_on(x, Shape{}, {0.0});
  for (std::size_t i = 0; i < m; ++i)
    mixed = add(mixed, mul(divide(unnorm[i], denom), draws[i]));

  // Sorted draws rescaled so each row spans exactly [-1, 1].
  Tensor sorted = sort_lastaxis(mixed).sorted;
  Tensor row_min = gather_lastaxis(sorted, {0});
  Tensor row_max = gather_lastaxis(sorted, {len - 1});
  Tensor span = sub(row_max, row_min);

  // Degenerate rows (zero span) fall back to the identity grid.
  std::vector<double> mask_values(n * c, 1.0);
  bool any_degenerate = false;
  for (std::size_t r = 0; r < n * c; ++r) {
    if (span.values()[r] < 1e-12) {
      mask_values[r] = 0.0;
      any_degenerate = true;
    }
  }
  Tensor grid = constant_on(x, ncl, uniform_grid(n * c, len));
  Tensor locations;
  if (any_degenerate) {
    Tensor mask = constant_on(x, Shape{n, c, 1}, mask_values);
    Tensor inv_mask = constant_on(x, Shape{n, c, 1}, [&] {
      std::vector<double> iv(mask_values.size());
      for (std::size_t i = 0; i < iv.size(); ++i) iv[i] = 1.0 - mask_values[i];
      return iv;
    }());
    Tensor safe_span = add(span, inv_mask);
    Tensor lambda = sub(mul(divide(sub(sorted, row_min), safe_span), 2.0), 1.0);
    locations = add(mul(lambda, mask), mul(grid, inv_mask));
  } else {
    locations = sub(mul(divide(sub(sorted, row_min), span), 2.0), 1.0);
  }
  return interp1d(x, locations);
}

Tensor permute_segments(const Tensor& x, const Tensor& raw_perm, std::size_t k_max,
                        const NoiseBundle& noise) {
  check_signal(x);
  if (noise.perm_keys.size() < k_max)
    throw UsageError("NoiseBundle permutation keys shorter than k_max");
  const std::size_t len = x.dim(2);

  Tensor relaxed = add(mul(logistic(raw_perm), static_cast<double>(k_max - 1)), 1.0);
  const std::size_t n_hard =
      1 + static_cast<std::size_t>(std::llround(
              static_cast<double>(k_max - 1) * logistic_value(raw_perm.values()[0])));
  const std::size_t segments = std::min<std::size_t>(std::max<std::size_t>(n_hard, 1), k_max);

  Tensor out = x;
  if (segments > 1) {
    const auto order = argsort_keys(noise.perm_keys, segments);
    out = gather_lastaxis(x, segment_gather_index(len, segments, order));
  }
  // Straight-through surrogate: multiply by relaxed/hard count, exactly 1 in
  // value, so raw_perm receives a gradient while the output is the hard
  // permutation.
  if (raw_perm.requires_grad()) {
    Tensor st = divide(relaxed, relaxed.detached());
    out = mul(out, st);
  }
  return out;
}

Tensor time_warp_baseline(const Tensor& x, double sigma_t, const std::vector<double>& eps,
                          std::size_t knots) {
  check_signal(x);
  if (x.on_tape())
    throw UsageError("time_warp_baseline is not differentiable and cannot join a tape");
  if (sigma_t < 0.0) throw DomainError("time_warp_baseline: negative sigma");
  const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
  if (eps.size() != n * c * knots) throw ShapeError("time_warp_baseline: eps count mismatch");

  const auto& vx = x.values();
  std::vector<double> out(vx.size());
  for (std::size_t r = 0; r < n * c; ++r) {
    // Knot values around 1, interpolated to a per-step increment curve.
    std::vector<double> knot(knots);
    for (std::size_t k = 0; k < knots; ++k)
      knot[k] = 1.0 + sigma_t * inverse_normal_cdf(eps[r * knots + k]);
    std::vector<double> cum(len);
    double total = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double pos = len > 1
                             ? static_cast<double>(j) * static_cast<double>(knots - 1) /
                                   static_cast<double>(len - 1)
                             : 0.0;
      std::size_t k0 = std::min<std::size_t>(static_cast<std::size_t>(pos), knots - 2);
      const double w = pos - static_cast<double>(k0);
      const double inc = (1.0 - w) * knot[k0] + w * knot[k0 + 1];
      total += inc;
      cum[j] = total;
    }
    const double lo = cum[0], hi = cum[len - 1];
    for (std::size_t j = 0; j < len; ++j) {
      const double warp =
          hi > lo ? (cum[j] - lo) / (hi - lo) * static_cast<double>(len - 1)
                  : static_cast<double>(j);
      std::size_t i0 = std::min<std::size_t>(static_cast<std::size_t>(warp), len > 1 ? len - 2 : 0);
      const double w = len > 1 ? warp - static_cast<double>(i0) : 0.0;
      const std::size_t i1 = len > 1 ? i0 + 1 : 0;
      out[r * len + j] = (1.0 - w) * vx[r * len + i0] + w * vx[r * len + i1];
    }
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor leaves_forward(const Tensor& x, const AugmentLeaves& leaves, const AugmentBounds& bounds,
                      const NoiseBundle& noise) {
  check_signal(x);
  if (noise.batch != x.dim(0) || noise.channels != x.dim(1) || noise.length != x.dim(2))
    throw ShapeError("NoiseBundle shape does not match the input signal");
  Tensor sigma_j = mul(logistic(leaves.raw_sigma_jitter), bounds.eta);
  Tensor sigma_s = mul(logistic(leaves.raw_sigma_scale), bounds.eta);
  Tensor sigma_m = mul(logistic(leaves.raw_sigma_magw), bounds.eta);

  Tensor v = jitter(x, sigma_j, noise.jitter_eps);
  v = scale(v, sigma_s, noise.scale_eps);
  v = mag_warp(v, sigma_m, noise.magw_eps, bounds.knots, bounds.magw_additive);
  v = time_distort(v, leaves, bounds, noise);
  v = permute_segments(v, leaves.raw_perm, bounds.k_max, noise);
  return v;
}

Tensor fixed_augment(const Tensor& x, double sigma, std::size_t k_max,
                     const AugmentBounds& bounds, const NoiseBundle& noise) {
  check_signal(x);
  if (x.on_tape()) throw UsageError("fixed_augment is not differentiable and cannot join a tape");
  Tensor sig = Tensor::scalar(sigma);
  Tensor v = jitter(x, sig, noise.jitter_eps);
  v = scale(v, sig, noise.scale_eps);
  v = mag_warp(v, sig, noise.magw_eps, bounds.knots, bounds.magw_additive);
  v = time_warp_baseline(v, sigma, noise.timew_eps, bounds.knots);
  const std::size_t segments =
      1 + std::min<std::size_t>(static_cast<std::size_t>(noise.perm_count_eps *
                                                         static_cast<double>(k_max)),
                                k_max - 1);
  if (segments > 1) {
    const auto order = argsort_keys(noise.perm_keys, segments);
    v = gather_lastaxis(v, segment_gather_index(x.dim(2), segments, order));
  }
  return v;
}

Tensor leaves_apply(const Tensor& x, const AugmentParams& params, const NoiseBundle& noise) {
  Tape tape;
  Tensor xin = tape.leaf(x.detached(), false);
  AugmentLeaves leaves = attach_params(tape, params, false);
  return leaves_forward(xin, leaves, params.bounds(), noise).detached();
}

FaithfulnessReport faithfulness_proxy(const Tensor& x, const Tensor& view) {
  if (x.shape() != view.shape())
    throw ShapeError("faithfulness_proxy shape mismatch: " + shape_str(x.shape()) + " vs " +
                     shape_str(view.shape()));
  if (x.rank() != 3) throw ShapeError("faithfulness_proxy expects (N,C,L)");
  const std::size_t n = x.dim(0), c = x.dim(1), len = x.dim(2);
  const auto& vx = x.values();
  const auto& vv = view.values();

  FaithfulnessReport report;
  double sq = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i) {
    const double d = vv[i] - vx[i];
    sq += d * d;
  }
  report.rmse = std::sqrt(sq / static_cast<double>(vx.size()));

  report.correlation.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mx = 0.0, mv = 0.0;
    const std::size_t count = n * len;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < len; ++j) {
        mx += vx[(b * c + ch) * len + j];
        mv += vv[(b * c + ch) * len + j];
      }
    mx /= static_cast<double>(count);
    mv /= static_cast<double>(count);
    double sxx = 0.0, svv = 0.0, sxv = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < len; ++j) {
        const double dx = vx[(b * c + ch) * len + j] - mx;
        const double dv = vv[(b * c + ch) * len + j] - mv;
        sxx += dx * dx;
        svv += dv * dv;
        sxv += dx * dv;
      }
    if (sxx <= 0.0 || svv <= 0.0) {
      report.correlation[ch] = report.rmse == 0.0 ? 1.0 : 0.0;
    } else {
      report.correlation[ch] = sxv / std::sqrt(sxx * svv);
    }
  }
  return report;
}

void write_view_csv(const std::string& path, const Tensor& view, std::size_t sample_index) {
  if (view.rank() != 3) throw ShapeError("write_view_csv expects (N,C,L)");
  if (sample_index >= view.dim(0)) throw UsageError("write_view_csv sample index out of range");
  const std::size_t c = view.dim(1), len = view.dim(2);
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  out << "channel";
  for (std::size_t j = 0; j < len; ++j) out << ",t" << j;
  out << '\n';
  char buf[32];
  for (std::size_t ch = 0; ch < c; ++ch) {
    out << ch;
    for (std::size_t j = 0; j < len; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", view.at((sample_index * c + ch) * len + j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace leaves
