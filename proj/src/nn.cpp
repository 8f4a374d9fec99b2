#include "freeflyer/nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <Eigen/QR>

#include "freeflyer/errors.hpp"

namespace ff {

namespace {

MatX orthogonal_init(long rows, long cols, Rng& rng, double scale) {
  const long n = std::max(rows, cols);
  MatX g(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<MatX> qr(g);
  MatX q = qr.householderQ() * MatX::Identity(n, n);
  // fix the sign convention so the draw is deterministic in distribution
  for (long j = 0; j < n; ++j) {
    if (qr.matrixQR()(j, j) < 0) q.col(j) = -q.col(j);
  }
  return scale * q.topLeftCorner(rows, cols);
}

}  // namespace

Mlp Mlp::create(int input_dim, const std::vector<int>& hidden, int output_dim, Rng& rng,
                double out_scale) {
  Mlp net;
  int prev = input_dim;
  for (const int h : hidden) {
    net.weights.push_back(orthogonal_init(h, prev, rng, 1.0));
    net.biases.push_back(VecX::Zero(h));
    prev = h;
  }
  net.weights.push_back(orthogonal_init(output_dim, prev, rng, out_scale));
  net.biases.push_back(VecX::Zero(output_dim));
  return net;
}

long Mlp::param_count() const {
  long n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

VecX Mlp::forward(const VecX& x) const {
  if (x.size() != input_dim()) {
    throw ShapeMismatchError("mlp forward: input dim " + std::to_string(x.size()) + " != " +
                             std::to_string(input_dim()));
  }
  VecX a = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    a = (weights[i] * a + biases[i]).eval();
    if (i + 1 < weights.size()) a = a.array().tanh().matrix();
  }
  return a;
}

MatX Mlp::forward_batch(const MatX& x) const {
  if (x.rows() != input_dim()) {
    throw ShapeMismatchError("mlp forward: input dim " + std::to_string(x.rows()) + " != " +
                             std::to_string(input_dim()));
  }
  MatX a = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    a = ((weights[i] * a).colwise() + biases[i]).eval();
    if (i + 1 < weights.size()) a = a.array().tanh().matrix();
  }
  return a;
}

MlpGrads MlpGrads::zeros_like(const Mlp& net) {
  MlpGrads g;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    g.weights.push_back(MatX::Zero(net.weights[i].rows(), net.weights[i].cols()));
    g.biases.push_back(VecX::Zero(net.biases[i].size()));
  }
  return g;
}

MatX mlp_forward_cached(const Mlp& net, const MatX& x, MlpCache& cache) {
  cache.acts.clear();
  cache.acts.push_back(x);
  MatX a = x;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    a = ((net.weights[i] * a).colwise() + net.biases[i]).eval();
    if (i + 1 < net.weights.size()) {
      a = a.array().tanh().matrix();
      cache.acts.push_back(a);
    }
  }
  cache.acts.push_back(a);  // linear output
  return a;
}

MatX mlp_backward(const Mlp& net, const MlpCache& cache, const MatX& dout, MlpGrads& grads) {
  MatX delta = dout;
  MatX dinput;
  for (int i = static_cast<int>(net.weights.size()) - 1; i >= 0; --i) {
    grads.weights[i] += delta * cache.acts[i].transpose();
    grads.biases[i] += delta.rowwise().sum();
    const MatX da = net.weights[i].transpose() * delta;
    if (i > 0) {
      // tanh derivative through the cached post-activation
      delta = da.cwiseProduct(MatX::Ones(da.rows(), da.cols()) -
                              cache.acts[i].cwiseProduct(cache.acts[i]));
    } else {
      dinput = da;
    }
  }
  return dinput;
}

GaussianPolicyHead GaussianPolicyHead::create(int action_dim, double bound, double log_std_init) {
  GaussianPolicyHead h;
  h.log_std = VecX::Constant(action_dim, log_std_init);
  h.bound = bound;
  return h;
}

VecX GaussianPolicyHead::sample(const VecX& mean, Rng& rng) const {
  VecX a(mean.size());
  for (long d = 0; d < mean.size(); ++d) {
    a[d] = mean[d] + std::exp(log_std[d]) * rng.normal();
  }
  return a;
}

double GaussianPolicyHead::log_prob(const VecX& mean, const VecX& action) const {
  if (mean.size() != action.size() || mean.size() != log_std.size()) {
    throw ShapeMismatchError("log_prob: dimension mismatch");
  }
  double lp = 0.0;
  for (long d = 0; d < mean.size(); ++d) {
    const double sigma = std::exp(log_std[d]);
    const double z = (action[d] - mean[d]) / sigma;
    lp += -0.5 * z * z - log_std[d] - 0.5 * std::log(2.0 * M_PI);
  }
  return lp;
}

VecX GaussianPolicyHead::to_physical(const VecX& action_norm) const {
  return bound * action_norm.cwiseMax(-1.0).cwiseMin(1.0);
}

VecX GaussianPolicyHead::to_normalized(const VecX& action_phys) const {
  return (action_phys / bound).cwiseMax(-1.0).cwiseMin(1.0);
}

AdamState AdamState::zeros(long rows, long cols) {
  AdamState s;
  s.m = MatX::Zero(rows, cols);
  s.v = MatX::Zero(rows, cols);
  return s;
}

void AdamState::update(Eigen::Ref<MatX> param, const MatX& grad, double lr) {
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  param -= (lr / bc1) * m.cwiseQuotient((v / bc2).cwiseSqrt() + MatX::Constant(v.rows(), v.cols(), eps));
}

MlpAdam MlpAdam::zeros_like(const Mlp& net) {
  MlpAdam a;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    a.w_states.push_back(AdamState::zeros(net.weights[i].rows(), net.weights[i].cols()));
    a.b_states.push_back(AdamState::zeros(net.biases[i].size(), 1));
  }
  return a;
}

void MlpAdam::update(Mlp& net, const MlpGrads& grads, double lr) {
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    w_states[i].update(net.weights[i], grads.weights[i], lr);
    MatX b = net.biases[i];
    b_states[i].update(b, grads.biases[i], lr);
    net.biases[i] = b;
  }
}

namespace {

constexpr std::uint32_t kCkptMagic = 0x46436b31;  // "FCk1"

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void put_i64(std::ofstream& f, std::int64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ofstream& f, double v) { f.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ofstream& f, const std::string& s) {
  put_u32(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::int64_t get_i64(std::ifstream& f) {
  std::int64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double get_f64(std::ifstream& f) {
  double v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_str(std::ifstream& f) {
  const std::uint32_t n = get_u32(f);
  std::string s(n, '\0');
  f.read(s.data(), n);
  return s;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointHeader& header,
                      const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  put_u32(f, kCkptMagic);
  put_u32(f, 1);  // format version
  put_str(f, header.agent_id);
  put_u32(f, static_cast<std::uint32_t>(header.actor_hidden.size()));
  for (int h : header.actor_hidden) put_u32(f, static_cast<std::uint32_t>(h));
  put_u32(f, static_cast<std::uint32_t>(header.critic_hidden.size()));
  for (int h : header.critic_hidden) put_u32(f, static_cast<std::uint32_t>(h));
  put_u32(f, static_cast<std::uint32_t>(header.obs_dim));
  put_u32(f, static_cast<std::uint32_t>(header.act_dim));
  put_f64(f, header.bound);
  put_u32(f, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_str(f, t.name);
    put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
    for (long d : t.shape) put_i64(f, d);
    put_i64(f, static_cast<std::int64_t>(t.data.size()));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!f) throw IoError("short write: " + path);
}

std::pair<CheckpointHeader, std::vector<NamedTensor>> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  if (get_u32(f) != kCkptMagic) throw IoError("bad checkpoint magic: " + path);
  if (get_u32(f) != 1) throw IoError("unsupported checkpoint version: " + path);
  CheckpointHeader h;
  h.agent_id = get_str(f);
  h.actor_hidden.resize(get_u32(f));
  for (auto& v : h.actor_hidden) v = static_cast<int>(get_u32(f));
  h.critic_hidden.resize(get_u32(f));
  for (auto& v : h.critic_hidden) v = static_cast<int>(get_u32(f));
  h.obs_dim = static_cast<int>(get_u32(f));
  h.act_dim = static_cast<int>(get_u32(f));
  h.bound = get_f64(f);
  std::vector<NamedTensor> tensors(get_u32(f));
  for (auto& t : tensors) {
    t.name = get_str(f);
    t.shape.resize(get_u32(f));
    for (auto& d : t.shape) d = static_cast<long>(get_i64(f));
    t.data.resize(static_cast<std::size_t>(get_i64(f)));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!f) throw IoError("truncated checkpoint: " + path);
  return {h, tensors};
}

}  // namespace ff
