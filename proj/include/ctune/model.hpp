#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctune/domain.hpp"
#include "ctune/tensor.hpp"

namespace ctune {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Encoder stage s runs at resolution H/2^s; the bottleneck runs at H/2^S.
// Decoder stage s mirrors encoder stage s and emits encoder_channels[s]
// channels, except stage 0 which emits the feature map (feature_channels).
struct ArchConfig {
  std::vector<int> encoder_channels{8, 16, 16};
  int bottleneck_channels = 32;
  int feature_channels = 16;
  int embedding_dim = 16;

  int stages() const { return static_cast<int>(encoder_channels.size()); }
  int global_dim() const { return bottleneck_channels; }
  int head_size() const { return feature_channels + 1; }
  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

// Shared encoder-decoder weights plus one parameter generator and embedding
// per class. Full names are "<shared name>" or "class.<id>.<local name>".
class ModelParams {
 public:
  ArchConfig arch;
  NamedTensors shared;
  std::map<ClassId, NamedTensors> class_specific;

  std::vector<std::string> names() const;
  Tensor& tensor(std::string_view full_name);
  const Tensor& tensor(std::string_view full_name) const;
  bool contains(std::string_view full_name) const;
  std::size_t parameter_count() const;

  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);

  bool operator==(const ModelParams&) const = default;
};

std::string class_tensor_name(ClassId k, std::string_view local);
// "shared" or "class:<id>".
std::string partition_label(std::string_view full_name);

namespace names {
inline constexpr std::string_view kEmbedding = "embedding";
inline constexpr std::string_view kFc1Weight = "mlp.fc1.weight";
inline constexpr std::string_view kFc1Bias = "mlp.fc1.bias";
inline constexpr std::string_view kFc2Weight = "mlp.fc2.weight";
inline constexpr std::string_view kFc2Bias = "mlp.fc2.bias";
}  // namespace names

// Deterministic unit-norm stand-in for a text embedding of `class_name`.
std::vector<double> pseudo_embedding(std::uint64_t seed, std::string_view class_name, int dim);

// Zero-valued parameters with the structure implied by `arch` and `classes`.
ModelParams model_skeleton(const ArchConfig& arch, const ClassSet& classes);

ModelParams init_model(std::uint64_t seed, const ArchConfig& arch, const ClassCatalog& catalog);

struct EncodedFeatures {
  RowMatrix feature_map;      // feature_channels x (H*W)
  Eigen::VectorXd global;     // spatial mean of the bottleneck
  GridDims dims;
};

struct HeadParams {
  Eigen::VectorXd theta;  // 1x1 conv weights followed by the bias
};

EncodedFeatures encode(const ModelParams& params, const Image& image);
HeadParams generate_head_params(const ModelParams& params, const Eigen::VectorXd& global_feature, ClassId k);
std::map<ClassId, ProbabilityGrid> predict(const ModelParams& params, const Image& image, const ClassSet& classes);

double sigmoid(double z);

struct Partition {
  std::set<std::string> trainable;
  std::set<std::string> frozen;
};

// Trainable = class-specific parts of the revised classes; everything else frozen.
Partition parameter_partition(const ModelParams& params, const ClassSet& revised_classes,
                              bool train_embeddings = true);
Partition all_trainable(const ModelParams& params);

// Forward pass that keeps the activations needed for backpropagation.
struct ForwardState {
  struct Conv {
    RowMatrix col;  // im2col of the layer input
    RowMatrix out;  // post-ReLU activation
  };
  GridDims dims;
  std::vector<Conv> encoder;
  Conv bottleneck;
  std::vector<Conv> decoder;  // decoder[s] mirrors encoder[s]
  Eigen::VectorXd global;
  struct Head {
    Eigen::VectorXd mlp_input;
    Eigen::VectorXd hidden;  // after tanh
    Eigen::VectorXd theta;
    Eigen::RowVectorXd logits;
  };
  std::map<ClassId, Head> heads;

  const RowMatrix& features() const { return decoder.front().out; }
};

ForwardState forward(const ModelParams& params, const Image& image, const ClassSet& classes);

// Accumulates d(loss)/d(parameter) into `grads` given d(loss)/d(logits) per
// class. With `shared_gradients` false only class-specific gradients are
// produced and the backbone backward pass is skipped.
void backward(const ModelParams& params, const ForwardState& state,
              const std::map<ClassId, Eigen::RowVectorXd>& logit_grads, bool shared_gradients, NamedTensors& grads);

}  // namespace ctune
