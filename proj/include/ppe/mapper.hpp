#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ppe/generator.hpp"

namespace ppe {

enum class MapperKind {
  constant,  // offset = scale * b, independent of w
  mlp,       // per-group MLP applied to every latent layer of the group
};

enum class Activation { leaky_relu, tanh };

struct MapperArchitecture {
  MapperKind kind = MapperKind::mlp;
  std::vector<std::size_t> hidden{64, 64, 64};
  Activation activation = Activation::leaky_relu;
  /// Half-open layer ranges, each with its own MLP. Empty: one group over all layers.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  /// Multiplies the network output.
  double output_scale = 0.1;
  /// Multiplies the default N(0, 1/fan_in) weight initialization.
  double init_scale = 1.0;

  nlohmann::json to_json() const;
  static MapperArchitecture from_json(const nlohmann::json& doc);
};

/// Trainable map latent -> latent offset. Parameters live in one flat vector.
class MapperModel {
 public:
  MapperModel(LatentLayout layout, MapperArchitecture arch, std::uint64_t seed);

  LatentLayout layout() const { return layout_; }
  const MapperArchitecture& architecture() const { return arch_; }

  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  const Eigen::VectorXd& parameters() const { return params_; }
  void set_parameters(const Eigen::VectorXd& params);

  /// M(w); same size as w.
  LatentCode offset(const LatentCode& w) const;
  /// Accumulates d<grad_offset, M(w)>/d(parameters) into `grad`.
  void backprop(const LatentCode& w, const LatentCode& grad_offset, Eigen::VectorXd& grad) const;

  bool operator==(const MapperModel& other) const {
    return layout_ == other.layout_ && params_ == other.params_;
  }

 private:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;  // out x in, column-major
    std::size_t bias_offset = 0;
  };
  struct Group {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<Layer> layers;
  };

  void check_input(const LatentCode& w) const;

  LatentLayout layout_;
  MapperArchitecture arch_;
  std::vector<Group> groups_;
  Eigen::VectorXd params_;
};

}  // namespace ppe
