#include "fmp/nn.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "fmp/error.hpp"
#include "fmp/rng.hpp"

namespace fmp {

std::vector<Matrix*> Mlp::parameters() {
  std::vector<Matrix*> out;
  for (DenseLayer& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Matrix*> Mlp::parameters() const {
  std::vector<const Matrix*> out;
  for (const DenseLayer& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

namespace {

std::vector<std::size_t> layer_dims(const MlpConfig& config) {
  std::vector<std::size_t> dims{config.input_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.output_dim);
  return dims;
}

}  // namespace

Mlp init_weights(const MlpConfig& config, std::uint64_t seed) {
  require(config.input_dim > 0 && config.output_dim > 0, ErrorCode::invalid_argument,
          "mlp dimensions must be positive");
  Mlp mlp;
  mlp.config = config;
  mlp.seed = seed;
  Rng rng(seed);
  const auto dims = layer_dims(config);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    require(dims[l + 1] > 0, ErrorCode::invalid_argument, "hidden width must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    DenseLayer layer{Matrix(dims[l], dims[l + 1]), Matrix(1, dims[l + 1])};
    for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

void validate(const Mlp& mlp) {
  const auto dims = layer_dims(mlp.config);
  require(mlp.layers.size() + 1 == dims.size(), ErrorCode::dimension_mismatch,
          "mlp layer count does not match config");
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const DenseLayer& layer = mlp.layers[l];
    require(layer.weight.rows() == dims[l] && layer.weight.cols() == dims[l + 1] &&
                layer.bias.rows() == 1 && layer.bias.cols() == dims[l + 1],
            ErrorCode::dimension_mismatch,
            "mlp layer " + std::to_string(l) + " has weight " + layer.weight.shape_string() +
                " and bias " + layer.bias.shape_string());
  }
}

MlpBinding bind(ad::Tape& tape, const Mlp& mlp, bool requires_grad) {
  MlpBinding binding;
  for (const Matrix* p : mlp.parameters()) binding.params.push_back(tape.leaf(*p, requires_grad));
  return binding;
}

ad::Var mlp_forward(const MlpBinding& mlp, ad::Var x) {
  const std::size_t layers = mlp.params.size() / 2;
  require(layers > 0, ErrorCode::invalid_argument, "mlp has no layers");
  require(x.cols() == mlp.params[0].rows(), ErrorCode::dimension_mismatch,
          "mlp_forward: input has " + std::to_string(x.cols()) + " columns, expected " +
              std::to_string(mlp.params[0].rows()));
  ad::Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::add_row(ad::matmul(h, mlp.params[2 * l]), mlp.params[2 * l + 1]);
    if (l + 1 < layers) h = ad::relu(h);
  }
  return h;
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x) {
  ad::Tape tape;
  const MlpBinding binding = bind(tape, mlp, false);
  return mlp_forward(binding, tape.constant(x)).value();
}

double cross_entropy(const Matrix& logits, std::span<const int> labels,
                     std::span<const std::size_t> nodes) {
  ad::Tape tape;
  return ad::cross_entropy_with_logits(tape.constant(logits), labels, nodes).value()(0, 0);
}

AdamState make_adam(const AdamConfig& config, std::span<const Matrix* const> params) {
  AdamState state;
  state.config = config;
  for (const Matrix* p : params) {
    state.m.emplace_back(p->rows(), p->cols());
    state.v.emplace_back(p->rows(), p->cols());
  }
  return state;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          ErrorCode::dimension_mismatch, "adam_step: parameter/gradient/state count mismatch");
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p];
    const Matrix& g = *grads[p];
    require(state.m[p].same_shape(w), ErrorCode::dimension_mismatch,
            "adam_step: state shape does not match parameter");
    require(g.empty() || g.same_shape(w), ErrorCode::dimension_mismatch,
            "adam_step: gradient " + g.shape_string() + " for parameter " + w.shape_string());
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double grad = (g.empty() ? 0.0 : g.data()[k]) + c.weight_decay * w.data()[k];
      double& m = state.m[p].data()[k];
      double& v = state.v[p].data()[k];
      m = c.beta1 * m + (1.0 - c.beta1) * grad;
      v = c.beta2 * v + (1.0 - c.beta2) * grad * grad;
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      w.data()[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

nlohmann::json checkpoint_to_json(const Mlp& mlp, const nlohmann::json& extra) {
  nlohmann::json config = extra.is_object() ? extra : nlohmann::json::object();
  config["input_dim"] = mlp.config.input_dim;
  config["hidden"] = mlp.config.hidden;
  config["output_dim"] = mlp.config.output_dim;
  nlohmann::json layers = nlohmann::json::array();
  for (const DenseLayer& layer : mlp.layers) {
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t i = 0; i < layer.weight.rows(); ++i) {
      const auto row = layer.weight.row(i);
      w.push_back(std::vector<double>(row.begin(), row.end()));
    }
    const auto b = layer.bias.row(0);
    layers.push_back({{"w", std::move(w)}, {"b", std::vector<double>(b.begin(), b.end())}});
  }
  return {{"config", std::move(config)}, {"layers", std::move(layers)}, {"seed", mlp.seed}};
}

Mlp mlp_from_checkpoint(const nlohmann::json& doc) {
  try {
    Mlp mlp;
    const auto& config = doc.at("config");
    mlp.config.input_dim = config.at("input_dim").get<std::size_t>();
    mlp.config.hidden = config.at("hidden").get<std::vector<std::size_t>>();
    mlp.config.output_dim = config.at("output_dim").get<std::size_t>();
    mlp.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& layer : doc.at("layers")) {
      const auto& w = layer.at("w");
      const auto b = layer.at("b").get<std::vector<double>>();
      const std::size_t rows = w.size();
      const std::size_t cols = rows == 0 ? 0 : w.at(0).size();
      std::vector<double> data;
      data.reserve(rows * cols);
      for (const auto& row : w) {
        const auto r = row.get<std::vector<double>>();
        require(r.size() == cols, ErrorCode::parse, "checkpoint weight rows are ragged");
        data.insert(data.end(), r.begin(), r.end());
      }
      mlp.layers.push_back({Matrix(rows, cols, std::move(data)), Matrix::row_vector(b)});
    }
    validate(mlp);
    return mlp;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& mlp,
                     const nlohmann::json& extra) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write checkpoint " + path.string());
  out << checkpoint_to_json(mlp, extra).dump() << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "failed writing checkpoint " + path.string());
}

nlohmann::json load_checkpoint_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot read checkpoint " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, "checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace fmp
