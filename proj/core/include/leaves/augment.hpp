#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaves/params.hpp"
#include "leaves/random.hpp"
#include "leaves/tensor.hpp"

namespace leaves {

/// Fixed constraints of the augmentation module. eta bounds the effective
/// intensities of the magnitude augmentations, k_max the permutation
/// segment count. knots and temperature are fixed constants of the method.
struct AugmentBounds {
  double eta = 0.05;
  std::size_t k_max = 5;
  std::size_t components = 6;  // GMM components M for the time distortion
  std::size_t knots = 8;       // k, fixed
  double temperature = 0.01;   // t, fixed
  bool magw_additive = false;  // literal additive magnitude warp, off by default
};

/// Learnable augmentation parameters: unconstrained raw scalars mapped to
/// bounded effective values. Effective intensity = eta * logistic(raw), so
/// raw 0 starts the intensities at eta/2. Segment count is
/// 1 + round((k_max-1) * logistic(raw_perm)).
class AugmentParams {
 public:
  explicit AugmentParams(AugmentBounds bounds);

  const AugmentBounds& bounds() const { return bounds_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  /// 4 + 3*M learnable scalars.
  std::size_t learnable_count() const { return store_.trainable_scalars(); }

  // Effective (bounded) values derived from the raw parameters.
  double sigma_jitter() const;
  double sigma_scale() const;
  double sigma_magw() const;
  std::size_t segments() const;
  std::vector<double> gmm_weights() const;  // normalized, sums to 1
  std::vector<double> gmm_means() const;
  std::vector<double> gmm_scales() const;  // strictly positive

 private:
  AugmentBounds bounds_;
  ParamStore store_;
};

/// All uniform randomness for one forward pass, drawn up front so the view
/// is a deterministic function of the parameters. Regenerating from the
/// stored seed reproduces the same arrays.
struct NoiseBundle {
  std::uint64_t seed = 0;
  std::size_t batch = 0, channels = 0, length = 0;
  std::vector<double> jitter_eps;                  // N*C*L
  std::vector<double> scale_eps;                   // N*C
  std::vector<double> magw_eps;                    // N*C*k
  std::vector<std::vector<double>> gmm_value_eps;  // M arrays, N*C*L each
  std::vector<std::vector<double>> gmm_mix_eps;    // M arrays, N*C*L each
  std::vector<double> perm_keys;                   // k_max shuffle keys
  std::vector<double> timew_eps;                   // N*C*k (baseline grid only)
  double perm_count_eps = 0.5;                     // segment-count draw (baseline grid only)

  static NoiseBundle generate(std::uint64_t seed, std::size_t batch, std::size_t channels,
                              std::size_t length, const AugmentBounds& bounds);
};

// Reparameterized sampling. eps arrays are uniforms in (0,1); the output is
// differentiable in the distribution parameters.
Tensor reparam_normal(const Tensor& mu, const Tensor& sigma,
                      const std::vector<double>& eps_uniform, const Shape& noise_shape);
Tensor reparam_uniform(const Tensor& low, const Tensor& high,
                       const std::vector<double>& eps, const Shape& noise_shape);

struct RelaxedBernoulliSample {
  Tensor value;   // in (0,1) after the logistic squash
  Tensor logits;  // pre-squash value, kept for logging
};
RelaxedBernoulliSample reparam_relaxed_bernoulli(const Tensor& p, double temperature,
                                                 const std::vector<double>& eps,
                                                 const Shape& noise_shape);

/// Raw parameter leaves registered on a tape, aligned with AugmentParams.
struct AugmentLeaves {
  Tensor raw_sigma_jitter, raw_sigma_scale, raw_sigma_magw, raw_perm;
  Tensor gmm_weights_raw, gmm_means_raw, gmm_scales_raw;
};
AugmentLeaves attach_params(Tape& tape, const AugmentParams& params, bool requires_grad = true);

// Individual augmentations. x is (N,C,L); all preserve the input shape.
Tensor jitter(const Tensor& x, const Tensor& sigma_j, const std::vector<double>& eps);
Tensor scale(const Tensor& x, const Tensor& sigma_s, const std::vector<double>& eps);
Tensor mag_warp(const Tensor& x, const Tensor& sigma_m, const std::vector<double>& eps,
                std::size_t knots, bool additive = false);
Tensor time_distort(const Tensor& x, const AugmentLeaves& leaves, const AugmentBounds& bounds,
                    const NoiseBundle& noise);
Tensor permute_segments(const Tensor& x, const Tensor& raw_perm, std::size_t k_max,
                        const NoiseBundle& noise);

/// Non-differentiable time-warp baseline for the fixed-sigma grid. Errors
/// if x participates in a gradient tape.
Tensor time_warp_baseline(const Tensor& x, double sigma_t, const std::vector<double>& eps,
                          std::size_t knots);

/// Full composition: jitter, scale, magnitude warp, time distortion,
/// permutation, in that fixed order. Differentiable w.r.t. the raw
/// parameter leaves for a frozen NoiseBundle.
Tensor leaves_forward(const Tensor& x, const AugmentLeaves& leaves, const AugmentBounds& bounds,
                      const NoiseBundle& noise);

/// Convenience for callers that do not need gradients: runs the composition
/// on a scratch tape with detached parameters.
Tensor leaves_apply(const Tensor& x, const AugmentParams& params, const NoiseBundle& noise);

/// Fixed-intensity baseline view for the SimCLR grid: jitter, scale,
/// magnitude warp and time warp all at the same sigma, plus a random
/// permutation with up to k_max segments. Not differentiable.
Tensor fixed_augment(const Tensor& x, double sigma, std::size_t k_max,
                     const AugmentBounds& bounds, const NoiseBundle& noise);

struct FaithfulnessReport {
  double rmse = 0.0;
  std::vector<double> correlation;  // per channel
};
/// Distortion statistics between an input and its view (logging aid).
FaithfulnessReport faithfulness_proxy(const Tensor& x, const Tensor& view);

/// Preview CSV: one row per channel, header "channel,t0,t1,...".
void write_view_csv(const std::string& path, const Tensor& view, std::size_t sample_index = 0);

}  // namespace leaves
