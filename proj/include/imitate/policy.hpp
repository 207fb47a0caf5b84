#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "imitate/actions.hpp"
#include "imitate/env.hpp"

namespace imitate {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::array<int, 4> kLayerDims = {kFeatureSize, 64, 64,
                                                  kNumActions};

// One affine layer: out = in * weights + bias, weights is fan_in x fan_out.
struct Layer {
  RowMatrix weights;
  Eigen::RowVectorXd bias;
};

struct PolicyParams {
  std::vector<Layer> layers;
  std::uint64_t init_seed = 0;

  std::vector<int> layer_dims() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  // Flat views in file order (weights then bias, layer by layer).
  double& at(std::size_t flat_index);
  double at(std::size_t flat_index) const;
};

// Gradients share the parameter layout.
using Gradients = std::vector<Layer>;

struct OptState {
  std::vector<Layer> first_moment;
  std::vector<Layer> second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Row i of observations is a flattened feature vector.
struct Batch {
  RowMatrix observations;
  std::vector<ActionId> labels;

  std::size_t size() const { return labels.size(); }
};

using Probabilities = std::array<double, kNumActions>;

PolicyParams init_params(std::uint64_t seed);
PolicyParams zero_like(const PolicyParams& params);

Probabilities forward(const PolicyParams& params, std::span<const double> obs);
Probabilities forward(const PolicyParams& params, const Observation& obs);
std::array<double, kNumActions> logits(const PolicyParams& params,
                                       std::span<const double> obs);

// Argmax with ties going to the lowest ordinal.
ActionId argmax_action(std::span<const double> scores);
ActionId act(const PolicyParams& params, const Observation& obs);

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

LossAndGrad loss_and_grad(const PolicyParams& params, const Batch& batch);
double batch_loss(const PolicyParams& params, const Batch& batch);

OptState make_opt_state(const PolicyParams& params, double learning_rate = 1e-3);
void optimizer_step(PolicyParams& params, const Gradients& grads, OptState& opt);

std::vector<std::uint8_t> serialize_params(const PolicyParams& params);
PolicyParams deserialize_params(std::span<const std::uint8_t> bytes);
void save_params(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_params(const std::filesystem::path& path);

}  // namespace imitate
