#include "metalab/labnet.hpp"

#include <string>

#include "metalab/errors.hpp"
#include "metalab/ops.hpp"

namespace metalab {

std::size_t LabNetConfig::group_channels(std::size_t index) const {
  switch (index) {
    case 1: return hidden_h;
    case 2: return 2 * hidden_h;
    case 3:
    case 4: return 4 * hidden_h;
    default: throw ConfigError("LabNet has blocks 1..4, got " + std::to_string(index));
  }
}

std::size_t LabNetConfig::in_channels(std::size_t index) const {
  return index == 1 ? 4 : out_channels(index - 1);
}

void LabNetConfig::validate() const {
  if (hidden_h == 0) throw ConfigError("LabNet: hidden_h must be positive");
  if (embed_dim == 0) throw ConfigError("LabNet: embed_dim must be positive");
  // Four 2x2 pools need at least 16 pixels per side.
  if (image_size < 16) {
    throw ConfigError("LabNet: image_size " + std::to_string(image_size) +
                      " is below the 16-pixel minimum for four pooling stages");
  }
}

template <typename T>
Tensor<T> llab_to_tensor(const color::LlabBatch& llab) {
  std::vector<T> values(llab.data.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<T>(llab.data[i]);
  return Tensor<T>(Shape{llab.batch * llab.images, 4, llab.height, llab.width}, std::move(values));
}

template <typename T>
LabNet<T>::LabNet(const LabNetConfig& config, ParamStore<T>& store, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  for (std::size_t i = 1; i <= kLabBlocks; ++i) {
    const std::string prefix = "labnet.lb" + std::to_string(i);
    const std::size_t out = config_.out_channels(i);
    const std::size_t in_per_group = config_.in_channels(i) / kLabGroups;
    const std::size_t fan_in = in_per_group * 9;
    Block& blk = blocks_[i - 1];
    blk.conv_w = store.add(prefix + ".conv.w", {out, in_per_group, 3, 3},
                           uniform_fan_in<T>(out * in_per_group * 9, fan_in, rng));
    blk.conv_b = store.add(prefix + ".conv.b", {out}, uniform_fan_in<T>(out, fan_in, rng));
    blk.bn_gamma = store.add(prefix + ".bn.gamma", {out}, std::vector<T>(out, T(1)));
    blk.bn_beta = store.add(prefix + ".bn.beta", {out}, std::vector<T>(out, T(0)));
  }
  const std::size_t in = 4 * config_.hidden_h;
  const std::size_t d = config_.embed_dim;
  auto make_head = [&](const std::string& name) {
    Head h;
    h.w = store.add("labnet." + name + ".w", {d, in}, uniform_fan_in<T>(d * in, in, rng));
    h.b = store.add("labnet." + name + ".b", {d}, uniform_fan_in<T>(d, in, rng));
    return h;
  };
  pe_light_ = make_head("fc_pe_light");
  pe_color_ = make_head("fc_pe_color");
  ls_light_ = make_head("fc_ls_light");
  ls_color_ = make_head("fc_ls_color");
}

template <typename T>
Tensor<T> LabNet<T>::block(const Tensor<T>& x, std::size_t index) const {
  if (index < 1 || index > kLabBlocks) {
    throw ConfigError("LabNet::block: index " + std::to_string(index) + " outside 1..4");
  }
  if (x.rank() != 4 || x.dim(1) != config_.in_channels(index)) {
    throw ShapeError("LabNet block " + std::to_string(index) + " expects " +
                     std::to_string(config_.in_channels(index)) + " channels, got " +
                     shape_str(x.shape()));
  }
  const Block& blk = blocks_[index - 1];
  Tensor<T> y = grouped_conv2d(x, blk.conv_w, blk.conv_b, kLabGroups, 1, 1);
  y = batch_norm(y, blk.bn_gamma, blk.bn_beta);
  y = relu(y);
  return max_pool2d(y, 2, 2);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> LabNet<T>::heads(const Tensor<T>& features, const Head& light,
                                                 const Head& color, std::size_t batch,
                                                 std::size_t images) const {
  const Tensor<T> pooled = global_max_pool2d(features);
  const std::size_t half = pooled.dim(1) / 2;
  const Tensor<T> light_in = narrow(pooled, 1, 0, half);
  const Tensor<T> color_in = narrow(pooled, 1, half, half);
  const Shape out{batch, images, config_.embed_dim};
  return {reshape(linear(light_in, light.w, light.b), out),
          reshape(linear(color_in, color.w, color.b), out)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> LabNet<T>::embed_penultimate(const Tensor<T>& x,
                                                             std::size_t batch,
                                                             std::size_t images) const {
  Tensor<T> h = x;
  for (std::size_t i = 1; i <= 3; ++i) h = block(h, i);
  return heads(h, pe_light_, pe_color_, batch, images);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> LabNet<T>::embed_last(const Tensor<T>& x, std::size_t batch,
                                                      std::size_t images) const {
  Tensor<T> h = x;
  for (std::size_t i = 1; i <= kLabBlocks; ++i) h = block(h, i);
  return heads(h, ls_light_, ls_color_, batch, images);
}

template <typename T>
GroupedEmbedding<T> LabNet<T>::forward(const Tensor<T>& x, std::size_t batch,
                                       std::size_t images) const {
  if (x.rank() != 4 || x.dim(0) != batch * images) {
    throw ShapeError("LabNet::forward: input " + shape_str(x.shape()) + " is not " +
                     std::to_string(batch) + " x " + std::to_string(images) + " images");
  }
  Tensor<T> h = x;
  for (std::size_t i = 1; i <= 3; ++i) h = block(h, i);
  GroupedEmbedding<T> emb;
  std::tie(emb.pe_light, emb.pe_color) = heads(h, pe_light_, pe_color_, batch, images);
  h = block(h, 4);
  std::tie(emb.ls_light, emb.ls_color) = heads(h, ls_light_, ls_color_, batch, images);
  return emb;
}

template Tensor<float> llab_to_tensor<float>(const color::LlabBatch&);
template Tensor<double> llab_to_tensor<double>(const color::LlabBatch&);
template class LabNet<float>;
template class LabNet<double>;

}  // namespace metalab
