#include "ppe/mapper.hpp"

#include <cmath>
#include <random>

#include "ppe/errors.hpp"

namespace ppe {

namespace {

constexpr double kLeakySlope = 0.2;

double activate(Activation a, double x) {
  switch (a) {
    case Activation::leaky_relu:
      return x > 0.0 ? x : kLeakySlope * x;
    case Activation::tanh:
      return std::tanh(x);
  }
  return x;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::leaky_relu:
      return x > 0.0 ? 1.0 : kLeakySlope;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

std::string kind_name(MapperKind k) { return k == MapperKind::constant ? "constant" : "mlp"; }
std::string activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "leaky_relu"; }

}  // namespace

nlohmann::json MapperArchitecture::to_json() const {
  nlohmann::json g = nlohmann::json::array();
  for (const auto& [b, e] : groups) g.push_back({b, e});
  return {{"kind", kind_name(kind)},          {"hidden", hidden},   {"activation", activation_name(activation)},
          {"groups", std::move(g)},           {"output_scale", output_scale}, {"init_scale", init_scale}};
}

MapperArchitecture MapperArchitecture::from_json(const nlohmann::json& doc) {
  MapperArchitecture a;
  const std::string kind = doc.value("kind", std::string("mlp"));
  if (kind == "constant") {
    a.kind = MapperKind::constant;
  } else if (kind != "mlp") {
    throw ConfigError("unknown mapper kind '" + kind + "'");
  }
  a.hidden = doc.value("hidden", a.hidden);
  const std::string act = doc.value("activation", std::string("leaky_relu"));
  if (act == "tanh") {
    a.activation = Activation::tanh;
  } else if (act != "leaky_relu") {
    throw ConfigError("unknown activation '" + act + "'");
  }
  for (const auto& g : doc.value("groups", nlohmann::json::array())) {
    a.groups.emplace_back(g.at(0).get<std::size_t>(), g.at(1).get<std::size_t>());
  }
  a.output_scale = doc.value("output_scale", a.output_scale);
  a.init_scale = doc.value("init_scale", a.init_scale);
  return a;
}

MapperModel::MapperModel(LatentLayout layout, MapperArchitecture arch, std::uint64_t seed)
    : layout_(layout), arch_(std::move(arch)) {
  if (layout_.size() == 0) throw ConfigError("mapper latent layout is empty");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  if (arch_.kind == MapperKind::constant) {
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.size()));
    for (Eigen::Index i = 0; i < params_.size(); ++i) params_[i] = arch_.init_scale * normal(rng);
    return;
  }

  auto ranges = arch_.groups;
  if (ranges.empty()) ranges.emplace_back(0, layout_.layers);
  std::vector<bool> covered(layout_.layers, false);
  for (const auto& [b, e] : ranges) {
    if (b >= e || e > layout_.layers) throw ConfigError("mapper group outside the latent layers");
    for (std::size_t l = b; l < e; ++l) {
      if (covered[l]) throw ConfigError("mapper groups overlap at layer " + std::to_string(l));
      covered[l] = true;
    }
  }

  std::size_t total = 0;
  for (const auto& [b, e] : ranges) {
    Group g{b, e, {}};
    std::size_t in = layout_.width;
    std::vector<std::size_t> widths = arch_.hidden;
    widths.push_back(layout_.width);
    for (std::size_t out : widths) {
      if (out == 0) throw ConfigError("mapper hidden width must be positive");
      g.layers.push_back({in, out, total, total + in * out});
      total += in * out + out;
      in = out;
    }
    groups_.push_back(std::move(g));
  }

  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
  for (const auto& g : groups_) {
    for (const auto& layer : g.layers) {
      const double stddev = arch_.init_scale / std::sqrt(static_cast<double>(layer.in));
      for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
        params_[static_cast<Eigen::Index>(layer.weight_offset + i)] = stddev * normal(rng);
      }
    }
  }
}

void MapperModel::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != params_.size()) throw ValidationError("mapper parameter count mismatch");
  params_ = params;
}

void MapperModel::check_input(const LatentCode& w) const {
  if (static_cast<std::size_t>(w.size()) != layout_.size()) {
    throw ValidationError("latent has " + std::to_string(w.size()) + " values, mapper expects " +
                          std::to_string(layout_.size()));
  }
}

LatentCode MapperModel::offset(const LatentCode& w) const {
  check_input(w);
  if (arch_.kind == MapperKind::constant) return arch_.output_scale * params_;

  LatentCode out = LatentCode::Zero(w.size());
  const auto width = static_cast<Eigen::Index>(layout_.width);
  for (const auto& g : groups_) {
    for (std::size_t l = g.begin; l < g.end; ++l) {
      Eigen::VectorXd a = w.segment(static_cast<Eigen::Index>(l) * width, width);
      for (std::size_t k = 0; k < g.layers.size(); ++k) {
        const Layer& layer = g.layers[k];
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + layer.weight_offset, static_cast<Eigen::Index>(layer.out),
                                            static_cast<Eigen::Index>(layer.in));
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + layer.bias_offset, static_cast<Eigen::Index>(layer.out));
        Eigen::VectorXd z = W * a + b;
        if (k + 1 < g.layers.size()) z = z.unaryExpr([&](double x) { return activate(arch_.activation, x); });
        a = std::move(z);
      }
      out.segment(static_cast<Eigen::Index>(l) * width, width) = arch_.output_scale * a;
    }
  }
  return out;
}

void MapperModel::backprop(const LatentCode& w, const LatentCode& grad_offset, Eigen::VectorXd& grad) const {
  check_input(w);
  if (grad_offset.size() != w.size()) throw ValidationError("offset gradient has the wrong size");
  if (grad.size() != params_.size()) throw ValidationError("parameter gradient has the wrong size");
  if (arch_.kind == MapperKind::constant) {
    grad += arch_.output_scale * grad_offset;
    return;
  }

  const auto width = static_cast<Eigen::Index>(layout_.width);
  for (const auto& g : groups_) {
    for (std::size_t l = g.begin; l < g.end; ++l) {
      // Forward pass keeping layer inputs and pre-activations.
      std::vector<Eigen::VectorXd> inputs;
      std::vector<Eigen::VectorXd> pre;
      Eigen::VectorXd a = w.segment(static_cast<Eigen::Index>(l) * width, width);
      for (std::size_t k = 0; k < g.layers.size(); ++k) {
        const Layer& layer = g.layers[k];
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + layer.weight_offset, static_cast<Eigen::Index>(layer.out),
                                            static_cast<Eigen::Index>(layer.in));
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + layer.bias_offset, static_cast<Eigen::Index>(layer.out));
        inputs.push_back(a);
        Eigen::VectorXd z = W * a + b;
        pre.push_back(z);
        if (k + 1 < g.layers.size()) z = z.unaryExpr([&](double x) { return activate(arch_.activation, x); });
        a = std::move(z);
      }

      Eigen::VectorXd delta = arch_.output_scale * grad_offset.segment(static_cast<Eigen::Index>(l) * width, width);
      for (std::size_t k = g.layers.size(); k-- > 0;) {
        const Layer& layer = g.layers[k];
        Eigen::Map<Eigen::MatrixXd> dW(grad.data() + layer.weight_offset, static_cast<Eigen::Index>(layer.out),
                                       static_cast<Eigen::Index>(layer.in));
        Eigen::Map<Eigen::VectorXd> db(grad.data() + layer.bias_offset, static_cast<Eigen::Index>(layer.out));
        dW.noalias() += delta * inputs[k].transpose();
        db += delta;
        if (k == 0) break;
        Eigen::Map<const Eigen::MatrixXd> W(params_.data() + layer.weight_offset, static_cast<Eigen::Index>(layer.out),
                                            static_cast<Eigen::Index>(layer.in));
        Eigen::VectorXd back = W.transpose() * delta;
        const Eigen::VectorXd& z = pre[k - 1];
        for (Eigen::Index i = 0; i < back.size(); ++i) back[i] *= activate_grad(arch_.activation, z[i]);
        delta = std::move(back);
      }
    }
  }
}

}  // namespace ppe
