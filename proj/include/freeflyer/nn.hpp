#pragma once

#include <string>
#include <vector>

#include "freeflyer/geometry.hpp"
#include "freeflyer/rng.hpp"

namespace ff {

// Minimal dense network stack: MLPs with tanh hidden layers and identity
// output, reverse-mode layer gradients, diagonal-Gaussian policy head and the
// Adam update. Everything is double precision and deterministic.

struct Mlp {
  std::vector<MatX> weights;  // (out x in) per layer
  std::vector<VecX> biases;

  /// Orthogonal-style init (QR of a Gaussian draw); the output layer is scaled
  /// by out_scale (0.01 for actors).
  static Mlp create(int input_dim, const std::vector<int>& hidden, int output_dim, Rng& rng,
                    double out_scale = 1.0);

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  long param_count() const;

  VecX forward(const VecX& x) const;       // throws ShapeMismatchError
  MatX forward_batch(const MatX& x) const;  // columns are samples
};

/// Post-activation values kept for the backward pass; acts[0] is the input.
struct MlpCache {
  std::vector<MatX> acts;
};

struct MlpGrads {
  std::vector<MatX> weights;
  std::vector<VecX> biases;

  static MlpGrads zeros_like(const Mlp& net);
};

MatX mlp_forward_cached(const Mlp& net, const MatX& x, MlpCache& cache);

/// Accumulates parameter gradients for dL/d(output) and returns dL/d(input).
MatX mlp_backward(const Mlp& net, const MlpCache& cache, const MatX& dout, MlpGrads& grads);

/// Diagonal Gaussian over the normalized action box [-1, 1]^dim. The mean is
/// tanh of the network output, the log-std is a state-independent learned
/// vector. Samples are clipped to the box only at execution; densities are
/// evaluated pre-clip.
struct GaussianPolicyHead {
  VecX log_std;   // init -0.5 per dim
  double bound;   // physical action bound (2 rad/s arm, 0.1 N*m base)

  static GaussianPolicyHead create(int action_dim, double bound, double log_std_init = -0.5);

  VecX sample(const VecX& mean, Rng& rng) const;  // normalized, pre-clip
  double log_prob(const VecX& mean, const VecX& action) const;
  VecX to_physical(const VecX& action_norm) const;
  VecX to_normalized(const VecX& action_phys) const;  // clipped into the box
};

/// Bias-corrected Adam for one tensor.
struct AdamState {
  MatX m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState zeros(long rows, long cols);
  void update(Eigen::Ref<MatX> param, const MatX& grad, double lr);
};

/// Adam across all tensors of an Mlp (plus optionally extra vectors).
struct MlpAdam {
  std::vector<AdamState> w_states;
  std::vector<AdamState> b_states;

  static MlpAdam zeros_like(const Mlp& net);
  void update(Mlp& net, const MlpGrads& grads, double lr);
};

/// Checkpoint container: versioned header, named tensors of 64-bit
/// little-endian values. Round-trips bit-exactly.
struct NamedTensor {
  std::string name;
  std::vector<long> shape;
  std::vector<double> data;
};

struct CheckpointHeader {
  std::string agent_id;
  std::vector<int> actor_hidden;
  std::vector<int> critic_hidden;
  int obs_dim = 0;
  int act_dim = 0;
  double bound = 0.0;
};

void write_checkpoint(const std::string& path, const CheckpointHeader& header,
                      const std::vector<NamedTensor>& tensors);
std::pair<CheckpointHeader, std::vector<NamedTensor>> read_checkpoint(const std::string& path);

}  // namespace ff
