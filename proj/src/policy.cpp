#include "imitate/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "imitate/error.hpp"

namespace imitate {

namespace {

static_assert(std::endian::native == std::endian::little,
              "policy files are written in host order");

constexpr char kMagic[4] = {'H', 'D', 'D', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

// 53-bit uniform in [0, 1); mt19937_64 output is fixed by the standard.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void check_shapes(const std::vector<Layer>& a, const std::vector<Layer>& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::kShapeMismatch, "layer count differs");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weights.rows() != b[i].weights.rows() ||
        a[i].weights.cols() != b[i].weights.cols() ||
        a[i].bias.size() != b[i].bias.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "layer " + std::to_string(i) + " shape differs");
    }
  }
}

std::vector<Layer> zero_layers(const std::vector<Layer>& like) {
  std::vector<Layer> out;
  out.reserve(like.size());
  for (const auto& l : like) {
    out.push_back({RowMatrix::Zero(l.weights.rows(), l.weights.cols()),
                   Eigen::RowVectorXd::Zero(l.bias.size())});
  }
  return out;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size())
      throw Error(ErrorCode::kTruncatedFile, "policy file ends early");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<int> PolicyParams::layer_dims() const {
  std::vector<int> dims;
  if (layers.empty()) return dims;
  dims.push_back(static_cast<int>(layers.front().weights.rows()));
  for (const auto& l : layers) dims.push_back(static_cast<int>(l.weights.cols()));
  return dims;
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

bool PolicyParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const Layer& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

double& PolicyParams::at(std::size_t flat) {
  for (auto& l : layers) {
    const auto nw = static_cast<std::size_t>(l.weights.size());
    if (flat < nw) return l.weights.data()[flat];
    flat -= nw;
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (flat < nb) return l.bias.data()[flat];
    flat -= nb;
  }
  throw std::out_of_range("parameter index");
}

double PolicyParams::at(std::size_t flat) const {
  return const_cast<PolicyParams*>(this)->at(flat);
}

PolicyParams init_params(std::uint64_t seed) {
  PolicyParams params;
  params.init_seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < kLayerDims.size(); ++i) {
    const int fan_in = kLayerDims[i];
    const int fan_out = kLayerDims[i + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Layer layer{RowMatrix(fan_in, fan_out), Eigen::RowVectorXd::Zero(fan_out)};
    for (Eigen::Index k = 0; k < layer.weights.size(); ++k) {
      layer.weights.data()[k] = (2.0 * unit_uniform(rng) - 1.0) * scale;
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

PolicyParams zero_like(const PolicyParams& params) {
  return {zero_layers(params.layers), params.init_seed};
}

std::array<double, kNumActions> logits(const PolicyParams& params,
                                       std::span<const double> obs) {
  if (obs.size() != static_cast<std::size_t>(params.layers.front().weights.rows()))
    throw Error(ErrorCode::kShapeMismatch, "observation length");
  for (double v : obs) {
    if (!std::isfinite(v))
      throw Error(ErrorCode::kNonFiniteInput, "observation has non-finite entry");
  }
  Eigen::RowVectorXd h =
      Eigen::Map<const Eigen::RowVectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Eigen::RowVectorXd z = h * l.weights + l.bias;
    if (i + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  std::array<double, kNumActions> out{};
  std::copy(h.data(), h.data() + kNumActions, out.begin());
  return out;
}

Probabilities forward(const PolicyParams& params, std::span<const double> obs) {
  const auto z = logits(params, obs);
  const double zmax = *std::max_element(z.begin(), z.end());
  Probabilities p{};
  double total = 0.0;
  for (int k = 0; k < kNumActions; ++k) {
    p[static_cast<std::size_t>(k)] = std::exp(z[static_cast<std::size_t>(k)] - zmax);
    total += p[static_cast<std::size_t>(k)];
  }
  for (double& v : p) v /= total;
  return p;
}

Probabilities forward(const PolicyParams& params, const Observation& obs) {
  std::array<double, kFeatureSize> x{};
  obs.write_features(x);
  return forward(params, x);
}

ActionId argmax_action(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
  }
  return static_cast<ActionId>(best);
}

ActionId act(const PolicyParams& params, const Observation& obs) {
  std::array<double, kFeatureSize> x{};
  obs.write_features(x);
  // Logits preserve the softmax ordering and avoid exp() rounding ties.
  const auto z = logits(params, x);
  return argmax_action(z);
}

namespace {

struct ForwardCache {
  std::vector<RowMatrix> pre;   // pre-activations per layer
  std::vector<RowMatrix> post;  // inputs to each layer (post[0] = batch)
  RowMatrix probs;
};

ForwardCache forward_batch(const PolicyParams& params, const RowMatrix& x) {
  ForwardCache c;
  c.post.push_back(x);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    RowMatrix z = c.post.back() * l.weights;
    z.rowwise() += l.bias;
    c.pre.push_back(z);
    if (i + 1 < params.layers.size()) c.post.push_back(z.cwiseMax(0.0));
  }
  const RowMatrix& z = c.pre.back();
  c.probs.resize(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double zmax = z.row(r).maxCoeff();
    c.probs.row(r) = (z.row(r).array() - zmax).exp().matrix();
    c.probs.row(r) /= c.probs.row(r).sum();
  }
  return c;
}

double mean_nll(const RowMatrix& logits_batch, const std::vector<ActionId>& labels) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits_batch.rows(); ++r) {
    const double zmax = logits_batch.row(r).maxCoeff();
    const double lse =
        zmax + std::log((logits_batch.row(r).array() - zmax).exp().sum());
    total += lse - logits_batch(r, ordinal(labels[static_cast<std::size_t>(r)]));
  }
  return total / static_cast<double>(logits_batch.rows());
}

void check_batch(const PolicyParams& params, const Batch& batch) {
  if (batch.labels.empty())
    throw Error(ErrorCode::kEmptyBatch, "batch has no samples");
  if (batch.observations.rows() != static_cast<Eigen::Index>(batch.labels.size()) ||
      batch.observations.cols() != params.layers.front().weights.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "batch shape");
  }
  if (!batch.observations.allFinite())
    throw Error(ErrorCode::kNonFiniteInput, "batch has non-finite entry");
}

}  // namespace

double batch_loss(const PolicyParams& params, const Batch& batch) {
  check_batch(params, batch);
  const auto cache = forward_batch(params, batch.observations);
  return mean_nll(cache.pre.back(), batch.labels);
}

LossAndGrad loss_and_grad(const PolicyParams& params, const Batch& batch) {
  check_batch(params, batch);
  const auto cache = forward_batch(params, batch.observations);
  const auto n = static_cast<double>(batch.size());

  LossAndGrad out;
  out.loss = mean_nll(cache.pre.back(), batch.labels);
  out.grads = zero_layers(params.layers);

  // d(mean NLL)/d(logits) = (softmax - onehot) / n
  RowMatrix delta = cache.probs;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    delta(static_cast<Eigen::Index>(r), ordinal(batch.labels[r])) -= 1.0;
  }
  delta /= n;

  for (std::size_t i = params.layers.size(); i-- > 0;) {
    out.grads[i].weights.noalias() = cache.post[i].transpose() * delta;
    out.grads[i].bias = delta.colwise().sum();
    if (i == 0) break;
    RowMatrix upstream = delta * params.layers[i].weights.transpose();
    delta = upstream.cwiseProduct(
        (cache.pre[i - 1].array() > 0.0).cast<double>().matrix());
  }
  return out;
}

OptState make_opt_state(const PolicyParams& params, double learning_rate) {
  OptState opt;
  opt.first_moment = zero_layers(params.layers);
  opt.second_moment = zero_layers(params.layers);
  opt.learning_rate = learning_rate;
  return opt;
}

void optimizer_step(PolicyParams& params, const Gradients& grads, OptState& opt) {
  check_shapes(params.layers, grads);
  check_shapes(params.layers, opt.first_moment);
  check_shapes(params.layers, opt.second_moment);
  ++opt.step_count;
  const double t = static_cast<double>(opt.step_count);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);

  auto update = [&](double* w, const double* g, double* m, double* v,
                    Eigen::Index count) {
    for (Eigen::Index k = 0; k < count; ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    update(p.weights.data(), grads[i].weights.data(),
           opt.first_moment[i].weights.data(), opt.second_moment[i].weights.data(),
           p.weights.size());
    update(p.bias.data(), grads[i].bias.data(), opt.first_moment[i].bias.data(),
           opt.second_moment[i].bias.data(), p.bias.size());
  }
}

std::vector<std::uint8_t> serialize_params(const PolicyParams& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weights.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weights.cols()));
    for (Eigen::Index k = 0; k < l.weights.size(); ++k) put(out, l.weights.data()[k]);
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) put(out, l.bias.data()[k]);
  }
  put<std::uint64_t>(out, params.init_seed);
  return out;
}

PolicyParams deserialize_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::kTruncatedFile, "no header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw Error(ErrorCode::kBadMagic, "not a policy file");
  Reader in(bytes.subspan(4));
  const auto version = in.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "policy format version " + std::to_string(version));
  }
  const auto layer_count = in.get<std::uint32_t>();
  PolicyParams params;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const auto rows = in.get<std::uint32_t>();
    const auto cols = in.get<std::uint32_t>();
    if (!params.layers.empty() &&
        params.layers.back().weights.cols() != static_cast<Eigen::Index>(rows)) {
      throw Error(ErrorCode::kShapeMismatch, "layer dimensions do not chain");
    }
    if (static_cast<std::uint64_t>(rows) * cols > (1u << 26))
      throw Error(ErrorCode::kTruncatedFile, "implausible layer size");
    Layer l{RowMatrix(rows, cols), Eigen::RowVectorXd(cols)};
    for (Eigen::Index k = 0; k < l.weights.size(); ++k) l.weights.data()[k] = in.get<double>();
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias.data()[k] = in.get<double>();
    params.layers.push_back(std::move(l));
  }
  params.init_seed = in.get<std::uint64_t>();
  if (!in.exhausted()) throw Error(ErrorCode::kShapeMismatch, "trailing bytes");
  return params;
}

void save_params(const PolicyParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize_params(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

PolicyParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

}  // namespace imitate
