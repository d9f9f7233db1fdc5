#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fmp/autodiff.hpp"
#include "fmp/matrix.hpp"
#include "json.hpp"

namespace fmp {

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // empty: a single linear layer
  std::size_t output_dim = 2;
};

struct DenseLayer {
  Matrix weight;  // in×out
  Matrix bias;    // 1×out
};

// Fully connected layers with ReLU between them and none after the last.
struct Mlp {
  MlpConfig config;
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
Mlp init_weights(const MlpConfig& config, std::uint64_t seed);

// Checks every layer shape against the config.
void validate(const Mlp& mlp);

// Parameters of an Mlp placed on a tape as leaves, ordered as
// Mlp::parameters(): w0, b0, w1, b1, ...
struct MlpBinding {
  std::vector<ad::Var> params;
};

MlpBinding bind(ad::Tape& tape, const Mlp& mlp, bool requires_grad = true);
ad::Var mlp_forward(const MlpBinding& mlp, ad::Var x);
Matrix mlp_forward(const Mlp& mlp, const Matrix& x);

// Mean over `nodes` of −log softmax(logits)_{i, label_i}.
double cross_entropy(const Matrix& logits, std::span<const int> labels,
                     std::span<const std::size_t> nodes);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

AdamState make_adam(const AdamConfig& config, std::span<const Matrix* const> params);

// Bias-corrected Adam with weight decay added to the gradient (L2 coupled).
// An empty gradient matrix counts as zero.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state);

// {"config": {...}, "layers": [{"w": [[...]], "b": [...]}], "seed": int}
// `extra` is merged into "config" as-is.
nlohmann::json checkpoint_to_json(const Mlp& mlp, const nlohmann::json& extra = nlohmann::json::object());
Mlp mlp_from_checkpoint(const nlohmann::json& doc);
void save_checkpoint(const std::filesystem::path& path, const Mlp& mlp,
                     const nlohmann::json& extra = nlohmann::json::object());
nlohmann::json load_checkpoint_json(const std::filesystem::path& path);

}  // namespace fmp
