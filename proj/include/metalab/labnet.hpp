#pragma once

// Lab-guided encoder: four GroupConv-BN-ReLU-MaxPool blocks with two channel
// groups (group 0 sees only the cloned lightness channels L,L; group 1 only
// a,b), a global max-pool per tier and separate per-group fully connected
// heads producing the penultimate (after block 3) and last (after block 4)
// embeddings.

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <utility>

#include "metalab/colorspace.hpp"
#include "metalab/param_store.hpp"
#include "metalab/tensor.hpp"

namespace metalab {

struct LabNetConfig {
  std::size_t hidden_h = 96;
  std::size_t embed_dim = 128;
  std::size_t image_size = 84;

  // Output channels of block `index` (1-based) per group: H, 2H, 4H, 4H.
  std::size_t group_channels(std::size_t index) const;
  // Total channels entering block `index` (block 1 takes the 4 LLAB channels).
  std::size_t in_channels(std::size_t index) const;
  std::size_t out_channels(std::size_t index) const { return 2 * group_channels(index); }
  // Throws ConfigError when the config cannot produce embeddings.
  void validate() const;
};

inline constexpr std::size_t kLabBlocks = 4;
inline constexpr std::size_t kLabGroups = 2;

template <typename T>
struct GroupedEmbedding {
  // [B x T x embed_dim] each.
  Tensor<T> pe_light;
  Tensor<T> pe_color;
  Tensor<T> ls_light;
  Tensor<T> ls_color;
};

// Converts an LLAB batch into a [B*T x 4 x H x W] input tensor.
template <typename T>
Tensor<T> llab_to_tensor(const color::LlabBatch& llab);

template <typename T>
class LabNet {
 public:
  // Registers "labnet.lb{1..4}.{conv,bn}.*" and "labnet.fc_{pe,ls}_{light,color}.*".
  LabNet(const LabNetConfig& config, ParamStore<T>& store, std::mt19937_64& rng);

  const LabNetConfig& config() const { return config_; }

  // grouped 3x3 conv (stride 1, pad 1) -> episodic BN -> ReLU -> 2x2 max-pool.
  Tensor<T> block(const Tensor<T>& x, std::size_t index) const;

  // x: [B*T x 4 x H x W]. Each returns (light, color) as [B x T x embed_dim].
  std::pair<Tensor<T>, Tensor<T>> embed_penultimate(const Tensor<T>& x, std::size_t batch,
                                                    std::size_t images) const;
  std::pair<Tensor<T>, Tensor<T>> embed_last(const Tensor<T>& x, std::size_t batch,
                                             std::size_t images) const;
  // Both tiers sharing blocks 1-3.
  GroupedEmbedding<T> forward(const Tensor<T>& x, std::size_t batch, std::size_t images) const;

 private:
  struct Block {
    Tensor<T> conv_w, conv_b, bn_gamma, bn_beta;
  };
  struct Head {
    Tensor<T> w, b;
  };

  std::pair<Tensor<T>, Tensor<T>> heads(const Tensor<T>& features, const Head& light,
                                        const Head& color, std::size_t batch,
                                        std::size_t images) const;

  LabNetConfig config_;
  std::array<Block, kLabBlocks> blocks_;
  Head pe_light_, pe_color_, ls_light_, ls_color_;
};

extern template class LabNet<float>;
extern template class LabNet<double>;

}  // namespace metalab
