#include "ctune/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctune/rng.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ctune {

namespace {

using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

constexpr double kProbabilityFloor = 1e-12;

#if defined(__GLIBC__)
// im2col buffers are a few MB each; keep them off mmap so every layer call
// does not pay for fresh zeroed pages.
[[maybe_unused]] const int kMallocTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  return 0;
}();
#endif

struct ConvShape {
  std::string prefix;
  int in = 0;
  int out = 0;
};

// Shared conv layers in a fixed order: encoder stages, bottleneck, decoder stages.
std::vector<ConvShape> conv_layers(const ArchConfig& arch) {
  std::vector<ConvShape> layers;
  const int S = arch.stages();
  for (int s = 0; s < S; ++s) {
    layers.push_back({"encoder." + std::to_string(s), s == 0 ? 1 : arch.encoder_channels[s - 1],
                      arch.encoder_channels[s]});
  }
  layers.push_back({"bottleneck", arch.encoder_channels[S - 1], arch.bottleneck_channels});
  for (int s = 0; s < S; ++s) {
    const int up = (s == S - 1) ? arch.bottleneck_channels : arch.encoder_channels[s + 1];
    const int out = (s == 0) ? arch.feature_channels : arch.encoder_channels[s];
    layers.push_back({"decoder." + std::to_string(s), up + arch.encoder_channels[s], out});
  }
  return layers;
}

RowMatrix im2col(const RowMatrix& in, int H, int W) {
  const int C = static_cast<int>(in.rows());
  RowMatrix col = RowMatrix::Zero(C * 9, static_cast<Eigen::Index>(H) * W);
  for (int c = 0; c < C; ++c) {
    const double* src = in.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      const int y0 = std::max(0, -dy);
      const int y1 = std::min(H, H - dy);
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(W, W - dx);
        double* dst = col.row(c * 9 + ky * 3 + kx).data();
        for (int y = y0; y < y1; ++y) {
          const double* s = src + (y + dy) * W + dx;
          double* d = dst + y * W;
          for (int x = x0; x < x1; ++x) d[x] = s[x];
        }
      }
    }
  }
  return col;
}

RowMatrix col2im(const RowMatrix& col, int C, int H, int W) {
  RowMatrix out = RowMatrix::Zero(C, static_cast<Eigen::Index>(H) * W);
  for (int c = 0; c < C; ++c) {
    double* dst = out.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      const int y0 = std::max(0, -dy);
      const int y1 = std::min(H, H - dy);
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(W, W - dx);
        const double* src = col.row(c * 9 + ky * 3 + kx).data();
        for (int y = y0; y < y1; ++y) {
          double* d = dst + (y + dy) * W + dx;
          const double* s = src + y * W;
          for (int x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
  return out;
}

RowMatrix avg_pool(const RowMatrix& in, int H, int W) {
  const int h = H / 2;
  const int w = W / 2;
  RowMatrix out(in.rows(), static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const double* s = in.row(c).data();
    double* d = out.row(c).data();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double* p = s + 2 * y * W + 2 * x;
        d[y * w + x] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
      }
    }
  }
  return out;
}

// Gradient of avg_pool; H, W are the input resolution.
RowMatrix avg_pool_backward(const RowMatrix& dout, int H, int W) {
  const int w = W / 2;
  RowMatrix din(dout.rows(), static_cast<Eigen::Index>(H) * W);
  for (Eigen::Index c = 0; c < dout.rows(); ++c) {
    const double* s = dout.row(c).data();
    double* d = din.row(c).data();
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) d[y * W + x] = 0.25 * s[(y / 2) * w + x / 2];
    }
  }
  return din;
}

// Nearest-neighbour 2x upsampling; h, w are the input resolution.
RowMatrix upsample(const RowMatrix& in, int h, int w) {
  const int W = 2 * w;
  RowMatrix out(in.rows(), static_cast<Eigen::Index>(4) * h * w);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const double* s = in.row(c).data();
    double* d = out.row(c).data();
    for (int y = 0; y < 2 * h; ++y) {
      for (int x = 0; x < W; ++x) d[y * W + x] = s[(y / 2) * w + x / 2];
    }
  }
  return out;
}

RowMatrix upsample_backward(const RowMatrix& dout, int h, int w) {
  const int W = 2 * w;
  RowMatrix din(dout.rows(), static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < dout.rows(); ++c) {
    const double* s = dout.row(c).data();
    double* d = din.row(c).data();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double* p = s + 2 * y * W + 2 * x;
        d[y * w + x] = p[0] + p[1] + p[W] + p[W + 1];
      }
    }
  }
  return din;
}

ForwardState::Conv conv_relu(const ModelParams& params, const std::string& prefix, const RowMatrix& input, int H,
                             int W) {
  const Tensor& wt = params.shared.find(prefix + ".weight")->second;
  const Tensor& bt = params.shared.find(prefix + ".bias")->second;
  const auto out_ch = static_cast<Eigen::Index>(wt.shape[0]);
  ConstMatrixMap weight(wt.values.data(), out_ch, static_cast<Eigen::Index>(wt.shape[1] * 9));
  ConstVectorMap bias(bt.values.data(), out_ch);
  ForwardState::Conv conv;
  conv.col = im2col(input, H, W);
  conv.out.noalias() = weight * conv.col;
  conv.out.colwise() += bias;
  conv.out = conv.out.cwiseMax(0.0);
  return conv;
}

Tensor& grad_slot(NamedTensors& grads, const std::string& name, const Tensor& like) {
  auto it = grads.find(name);
  if (it == grads.end()) it = grads.emplace(name, Tensor::zeros(like.shape)).first;
  return it->second;
}

// Backward through one conv+ReLU layer: accumulates weight/bias gradients and
// returns d(loss)/d(col) when `need_input` is set.
RowMatrix conv_relu_backward(const ModelParams& params, const std::string& prefix, const ForwardState::Conv& conv,
                             const RowMatrix& dout, NamedTensors& grads, bool need_input) {
  const Tensor& wt = params.shared.find(prefix + ".weight")->second;
  const Tensor& bt = params.shared.find(prefix + ".bias")->second;
  const auto out_ch = static_cast<Eigen::Index>(wt.shape[0]);
  const auto fan = static_cast<Eigen::Index>(wt.shape[1] * 9);
  RowMatrix dz = (conv.out.array() > 0.0).select(dout, 0.0);
  Tensor& gw = grad_slot(grads, prefix + ".weight", wt);
  Tensor& gb = grad_slot(grads, prefix + ".bias", bt);
  MatrixMap(gw.values.data(), out_ch, fan).noalias() += dz * conv.col.transpose();
  Eigen::Map<Eigen::VectorXd>(gb.values.data(), out_ch) += dz.rowwise().sum();
  if (!need_input) return {};
  ConstMatrixMap weight(wt.values.data(), out_ch, fan);
  return weight.transpose() * dz;
}

const NamedTensors& class_tensors(const ModelParams& params, ClassId k) {
  auto it = params.class_specific.find(k);
  if (it == params.class_specific.end()) throw DomainError("unknown class " + std::to_string(k));
  return it->second;
}

ForwardState::Head run_head(const ModelParams& params, const Eigen::VectorXd& global, ClassId k) {
  const auto& t = class_tensors(params, k);
  const Tensor& emb = t.find(names::kEmbedding)->second;
  const Tensor& w1 = t.find(names::kFc1Weight)->second;
  const Tensor& b1 = t.find(names::kFc1Bias)->second;
  const Tensor& w2 = t.find(names::kFc2Weight)->second;
  const Tensor& b2 = t.find(names::kFc2Bias)->second;
  const auto dE = global.size();
  const auto dw = static_cast<Eigen::Index>(emb.size());
  if (dE + dw != static_cast<Eigen::Index>(w1.shape[1])) throw ShapeError("global feature has wrong dimension");
  ForwardState::Head head;
  head.mlp_input.resize(dE + dw);
  head.mlp_input << global, ConstVectorMap(emb.values.data(), dw);
  const auto hidden = static_cast<Eigen::Index>(w1.shape[0]);
  const auto out = static_cast<Eigen::Index>(w2.shape[0]);
  head.hidden = (ConstMatrixMap(w1.values.data(), hidden, dE + dw) * head.mlp_input +
                 ConstVectorMap(b1.values.data(), hidden))
                    .array()
                    .tanh()
                    .matrix();
  head.theta = ConstMatrixMap(w2.values.data(), out, hidden) * head.hidden + ConstVectorMap(b2.values.data(), out);
  return head;
}

void check_image(const ArchConfig& arch, GridDims dims) {
  const int factor = 1 << arch.stages();
  if (dims.height <= 0 || dims.width <= 0 || dims.height % factor != 0 || dims.width % factor != 0) {
    throw ShapeError("image " + to_string(dims) + " is not divisible by " + std::to_string(factor));
  }
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.values) v = stddev * rng.normal();
}

}  // namespace

void ArchConfig::validate() const {
  if (encoder_channels.empty()) throw DomainError("arch: at least one encoder stage is required");
  for (int c : encoder_channels) {
    if (c < 1) throw DomainError("arch: channel widths must be >= 1");
  }
  if (bottleneck_channels < 1 || feature_channels < 1 || embedding_dim < 1) {
    throw DomainError("arch: dimensions must be >= 1");
  }
}

std::string class_tensor_name(ClassId k, std::string_view local) {
  return "class." + std::to_string(k) + "." + std::string(local);
}

std::string partition_label(std::string_view full_name) {
  if (full_name.starts_with("class.")) {
    const auto rest = full_name.substr(6);
    const auto dot = rest.find('.');
    return "class:" + std::string(rest.substr(0, dot));
  }
  return "shared";
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : shared) out.push_back(name);
  for (const auto& [k, tensors] : class_specific) {
    for (const auto& [local, _] : tensors) out.push_back(class_tensor_name(k, local));
  }
  return out;
}

namespace {
template <class Params>
auto* find_tensor(Params& params, std::string_view full_name) {
  using T = std::conditional_t<std::is_const_v<Params>, const Tensor, Tensor>;
  T* result = nullptr;
  if (full_name.starts_with("class.")) {
    const auto rest = full_name.substr(6);
    const auto dot = rest.find('.');
    if (dot == std::string_view::npos) return result;
    ClassId k = 0;
    try {
      k = std::stoi(std::string(rest.substr(0, dot)));
    } catch (const std::exception&) {
      return result;
    }
    auto cit = params.class_specific.find(k);
    if (cit == params.class_specific.end()) return result;
    auto it = cit->second.find(rest.substr(dot + 1));
    if (it != cit->second.end()) result = &it->second;
    return result;
  }
  auto it = params.shared.find(full_name);
  if (it != params.shared.end()) result = &it->second;
  return result;
}
}  // namespace

Tensor& ModelParams::tensor(std::string_view full_name) {
  Tensor* t = find_tensor(*this, full_name);
  if (!t) throw StructuralError("no parameter named " + std::string(full_name));
  return *t;
}

const Tensor& ModelParams::tensor(std::string_view full_name) const {
  const Tensor* t = find_tensor(*this, full_name);
  if (!t) throw StructuralError("no parameter named " + std::string(full_name));
  return *t;
}

bool ModelParams::contains(std::string_view full_name) const { return find_tensor(*this, full_name) != nullptr; }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for (const auto& [name, t] : shared) fn(name, t);
  for (const auto& [k, tensors] : class_specific) {
    for (const auto& [local, t] : tensors) fn(class_tensor_name(k, local), t);
  }
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (auto& [name, t] : shared) fn(name, t);
  for (auto& [k, tensors] : class_specific) {
    for (auto& [local, t] : tensors) fn(class_tensor_name(k, local), t);
  }
}

std::vector<double> pseudo_embedding(std::uint64_t seed, std::string_view class_name, int dim) {
  Rng rng(derive_seed(seed, fnv1a64(class_name)));
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

ModelParams model_skeleton(const ArchConfig& arch, const ClassSet& classes) {
  arch.validate();
  ModelParams params;
  params.arch = arch;
  for (const auto& layer : conv_layers(arch)) {
    params.shared.emplace(layer.prefix + ".weight",
                          Tensor::zeros({static_cast<std::size_t>(layer.out), static_cast<std::size_t>(layer.in), 3, 3}));
    params.shared.emplace(layer.prefix + ".bias", Tensor::zeros({static_cast<std::size_t>(layer.out)}));
  }
  const auto dE = static_cast<std::size_t>(arch.global_dim());
  const auto dw = static_cast<std::size_t>(arch.embedding_dim);
  const auto out = static_cast<std::size_t>(arch.head_size());
  for (ClassId k : classes) {
    NamedTensors t;
    t.emplace(names::kEmbedding, Tensor::zeros({dw}));
    t.emplace(names::kFc1Weight, Tensor::zeros({dw, dE + dw}));
    t.emplace(names::kFc1Bias, Tensor::zeros({dw}));
    t.emplace(names::kFc2Weight, Tensor::zeros({out, dw}));
    t.emplace(names::kFc2Bias, Tensor::zeros({out}));
    params.class_specific.emplace(k, std::move(t));
  }
  return params;
}

ModelParams init_model(std::uint64_t seed, const ArchConfig& arch, const ClassCatalog& catalog) {
  ModelParams params = model_skeleton(arch, catalog.all_ids());
  for (const auto& layer : conv_layers(arch)) {
    const auto name = layer.prefix + ".weight";
    Rng rng(derive_seed(seed, fnv1a64(name)));
    fill_normal(params.shared.at(name), rng, std::sqrt(2.0 / (9.0 * layer.in)));
  }
  const auto fan1 = static_cast<double>(arch.global_dim() + arch.embedding_dim);
  const auto fan2 = static_cast<double>(arch.embedding_dim);
  for (const auto& c : catalog.classes()) {
    NamedTensors& t = params.class_specific.at(c.id);
    t.find(names::kEmbedding)->second.values = pseudo_embedding(seed, c.name, arch.embedding_dim);
    Rng rng(derive_seed(seed, 0x1000u + static_cast<std::uint64_t>(c.id)));
    fill_normal(t.find(names::kFc1Weight)->second, rng, std::sqrt(1.0 / fan1));
    fill_normal(t.find(names::kFc2Weight)->second, rng, std::sqrt(1.0 / fan2));
  }
  return params;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

ForwardState forward(const ModelParams& params, const Image& image, const ClassSet& classes) {
  const ArchConfig& arch = params.arch;
  check_image(arch, image.dims());
  for (ClassId k : classes) class_tensors(params, k);
  const int S = arch.stages();
  const int H = image.height();
  const int W = image.width();

  ForwardState st;
  st.dims = image.dims();
  RowMatrix x(1, static_cast<Eigen::Index>(image.size()));
  for (std::size_t i = 0; i < image.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = image[i];

  for (int s = 0; s < S; ++s) {
    st.encoder.push_back(conv_relu(params, "encoder." + std::to_string(s), x, H >> s, W >> s));
    x = avg_pool(st.encoder.back().out, H >> s, W >> s);
  }
  st.bottleneck = conv_relu(params, "bottleneck", x, H >> S, W >> S);
  st.global = st.bottleneck.out.rowwise().mean();

  st.decoder.resize(static_cast<std::size_t>(S));
  const RowMatrix* prev = &st.bottleneck.out;
  for (int s = S - 1; s >= 0; --s) {
    const int h = H >> (s + 1);
    const int w = W >> (s + 1);
    const RowMatrix& skip = st.encoder[static_cast<std::size_t>(s)].out;
    RowMatrix cat(prev->rows() + skip.rows(), skip.cols());
    cat.topRows(prev->rows()) = upsample(*prev, h, w);
    cat.bottomRows(skip.rows()) = skip;
    st.decoder[static_cast<std::size_t>(s)] = conv_relu(params, "decoder." + std::to_string(s), cat, H >> s, W >> s);
    prev = &st.decoder[static_cast<std::size_t>(s)].out;
  }

  const RowMatrix& F = st.features();
  const auto df = static_cast<Eigen::Index>(arch.feature_channels);
  for (ClassId k : classes) {
    auto head = run_head(params, st.global, k);
    head.logits = head.theta.head(df).transpose() * F;
    head.logits.array() += head.theta(df);
    st.heads.emplace(k, std::move(head));
  }
  return st;
}

void backward(const ModelParams& params, const ForwardState& st,
              const std::map<ClassId, Eigen::RowVectorXd>& logit_grads, bool shared_gradients, NamedTensors& grads) {
  const ArchConfig& arch = params.arch;
  const int S = arch.stages();
  const int H = st.dims.height;
  const int W = st.dims.width;
  const auto df = static_cast<Eigen::Index>(arch.feature_channels);
  const auto dE = static_cast<Eigen::Index>(arch.global_dim());
  const RowMatrix& F = st.features();

  RowMatrix dF;
  Eigen::VectorXd dglobal;
  if (shared_gradients) {
    dF = RowMatrix::Zero(F.rows(), F.cols());
    dglobal = Eigen::VectorXd::Zero(dE);
  }

  for (const auto& [k, g] : logit_grads) {
    auto hit = st.heads.find(k);
    if (hit == st.heads.end()) throw ContractError("backward: no forward head for class " + std::to_string(k));
    const auto& head = hit->second;
    Eigen::VectorXd dtheta(df + 1);
    dtheta.head(df) = F * g.transpose();
    dtheta(df) = g.sum();
    if (shared_gradients) dF.noalias() += head.theta.head(df) * g;

    const auto& t = class_tensors(params, k);
    const Tensor& w1 = t.find(names::kFc1Weight)->second;
    const Tensor& w2 = t.find(names::kFc2Weight)->second;
    const auto hidden = static_cast<Eigen::Index>(w1.shape[0]);
    const auto in = static_cast<Eigen::Index>(w1.shape[1]);
    auto slot = [&](std::string_view local) -> Tensor& {
      return grad_slot(grads, class_tensor_name(k, local), t.find(local)->second);
    };
    MatrixMap(slot(names::kFc2Weight).values.data(), df + 1, hidden).noalias() += dtheta * head.hidden.transpose();
    Eigen::Map<Eigen::VectorXd>(slot(names::kFc2Bias).values.data(), df + 1) += dtheta;
    Eigen::VectorXd dpre = (ConstMatrixMap(w2.values.data(), df + 1, hidden).transpose() * dtheta).array() *
                           (1.0 - head.hidden.array().square());
    MatrixMap(slot(names::kFc1Weight).values.data(), hidden, in).noalias() += dpre * head.mlp_input.transpose();
    Eigen::Map<Eigen::VectorXd>(slot(names::kFc1Bias).values.data(), hidden) += dpre;
    Eigen::VectorXd dinput = ConstMatrixMap(w1.values.data(), hidden, in).transpose() * dpre;
    Eigen::Map<Eigen::VectorXd>(slot(names::kEmbedding).values.data(), in - dE) += dinput.tail(in - dE);
    if (shared_gradients) dglobal += dinput.head(dE);
  }
  if (!shared_gradients) return;

  std::vector<RowMatrix> dskip(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    const auto& e = st.encoder[static_cast<std::size_t>(s)].out;
    dskip[static_cast<std::size_t>(s)] = RowMatrix::Zero(e.rows(), e.cols());
  }

  RowMatrix dd = std::move(dF);
  for (int s = 0; s < S; ++s) {
    const auto& conv = st.decoder[static_cast<std::size_t>(s)];
    RowMatrix dcol = conv_relu_backward(params, "decoder." + std::to_string(s), conv, dd, grads, true);
    const auto cat_ch = static_cast<int>(dcol.rows() / 9);
    RowMatrix dcat = col2im(dcol, cat_ch, H >> s, W >> s);
    const auto skip_ch = dskip[static_cast<std::size_t>(s)].rows();
    dskip[static_cast<std::size_t>(s)] += dcat.bottomRows(skip_ch);
    dd = upsample_backward(dcat.topRows(dcat.rows() - skip_ch), H >> (s + 1), W >> (s + 1));
  }

  // dd now holds the gradient of the bottleneck activation.
  const auto nb = static_cast<double>(st.bottleneck.out.cols());
  dd.colwise() += dglobal / nb;
  {
    RowMatrix dcol = conv_relu_backward(params, "bottleneck", st.bottleneck, dd, grads, true);
    RowMatrix dx = col2im(dcol, static_cast<int>(dcol.rows() / 9), H >> S, W >> S);
    dskip[static_cast<std::size_t>(S - 1)] += avg_pool_backward(dx, H >> (S - 1), W >> (S - 1));
  }
  for (int s = S - 1; s >= 0; --s) {
    const auto& conv = st.encoder[static_cast<std::size_t>(s)];
    RowMatrix dcol =
        conv_relu_backward(params, "encoder." + std::to_string(s), conv, dskip[static_cast<std::size_t>(s)], grads, s > 0);
    if (s > 0) {
      RowMatrix dx = col2im(dcol, static_cast<int>(dcol.rows() / 9), H >> s, W >> s);
      dskip[static_cast<std::size_t>(s - 1)] += avg_pool_backward(dx, H >> (s - 1), W >> (s - 1));
    }
  }
}

EncodedFeatures encode(const ModelParams& params, const Image& image) {
  ForwardState st = forward(params, image, {});
  EncodedFeatures out;
  out.dims = st.dims;
  out.global = st.global;
  out.feature_map = std::move(st.decoder.front().out);
  return out;
}

HeadParams generate_head_params(const ModelParams& params, const Eigen::VectorXd& global_feature, ClassId k) {
  return {run_head(params, global_feature, k).theta};
}

std::map<ClassId, ProbabilityGrid> predict(const ModelParams& params, const Image& image, const ClassSet& classes) {
  const ForwardState st = forward(params, image, classes);
  std::map<ClassId, ProbabilityGrid> out;
  for (const auto& [k, head] : st.heads) {
    ProbabilityGrid p(image.dims());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = std::clamp(sigmoid(head.logits(static_cast<Eigen::Index>(i))), kProbabilityFloor,
                        1.0 - kProbabilityFloor);
    }
    out.emplace(k, std::move(p));
  }
  return out;
}

Partition parameter_partition(const ModelParams& params, const ClassSet& revised_classes, bool train_embeddings) {
  for (ClassId k : revised_classes) {
    if (!params.class_specific.count(k)) throw DomainError("parameter_partition: unknown class " + std::to_string(k));
  }
  Partition p;
  for (const auto& name : params.names()) {
    bool trainable = false;
    if (name.starts_with("class.")) {
      const auto label = partition_label(name);
      const ClassId k = std::stoi(label.substr(6));
      trainable = revised_classes.count(k) != 0;
      if (!train_embeddings && name.ends_with(names::kEmbedding)) trainable = false;
    }
    (trainable ? p.trainable : p.frozen).insert(name);
  }
  return p;
}

Partition all_trainable(const ModelParams& params) {
  Partition p;
  for (const auto& name : params.names()) p.trainable.insert(name);
  return p;
}

}  // namespace ctune
