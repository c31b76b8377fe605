#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "bokeh/autodiff.hpp"
#include "bokeh/rng.hpp"

namespace bokeh {

// Architecture hyperparameters of the multi-scale pyramid.
//
// Level 1 runs at the input resolution, level l at input_size / 2^(l-1).
// Empty kernel_sets / instance_norm_levels are replaced by the defaults in
// resolved(): kernels {3}, {3,5}, {3,5,7}, then {3,5,7,9}; normalization on
// levels 2..min(5, levels).
struct PyNetConfig {
  int levels = 5;
  int base_width = 8;
  int width_cap_multiplier = 8;
  int input_channels = 4;
  int input_size = 128;
  std::vector<std::vector<int>> kernel_sets;
  std::set<int> instance_norm_levels;
  std::uint64_t seed = 0;

  static constexpr double kLeakyAlpha = 0.2;
  static constexpr double kNormEps = 1e-5;

  PyNetConfig resolved() const;
  // Throws ConfigError describing the first violated invariant.
  void validate() const;

  int width(int level) const;
  int scale(int level) const { return input_size >> (level - 1); }
  int block_repeats(int level) const { return level >= 4 ? 2 : 1; }
  const std::vector<int>& kernels(int level) const { return kernel_sets.at(level - 1); }
  bool normalized(int level) const { return instance_norm_levels.count(level) > 0; }

  friend bool operator==(const PyNetConfig&, const PyNetConfig&) = default;
};

// Group id of the two final upscalers that produce the 2x level-1 output.
inline constexpr int kOutputGroup = 0;

template <class T>
struct Parameter {
  std::string name;
  int group = 0;  // owning level, or kOutputGroup
  ad::Var<T> var;
  // Incremented each time a forward pass reads the parameter.
  mutable std::uint64_t uses = 0;

  std::size_t numel() const { return var.value().numel(); }
};

// The instantiated pyramid. Copies share parameter storage (a copy is a
// view, e.g. with a different ablation mask); use clone() for an
// independent model.
template <class T>
class PyNetModel {
 public:
  explicit PyNetModel(const PyNetConfig& config);

  const PyNetConfig& config() const { return config_; }

  // Output of level `level`: 3 x 2S x 2S for level 1, otherwise
  // 3 x S/2^(level-1) x S/2^(level-1). Only the subgraph feeding that head
  // is evaluated.
  ad::Var<T> forward(const ad::Var<T>& input, int level) const;
  Tensor<T> predict(const Tensor<T>& input, int level) const;

  const std::set<int>& ablation_mask() const { return ablation_; }
  // Disabled levels contribute zero features downstream. Only levels >= 4
  // may be disabled.
  void set_ablation_mask(std::set<int> disabled);

  std::vector<Parameter<T>>& parameters() { return store_->params; }
  const std::vector<Parameter<T>>& parameters() const { return store_->params; }
  const Parameter<T>& parameter(const std::string& name) const;
  Parameter<T>& parameter(const std::string& name);

  // Parameters of levels >= level, plus the final upscalers when level == 1.
  std::vector<Parameter<T>*> trainable_parameters(int level);

  std::size_t param_count() const;
  void zero_grads();
  void reset_use_counters() const;

  // Same parameters, different input resolution (weights are size-agnostic).
  PyNetModel with_input_size(int input_size) const;
  PyNetModel clone() const;

 private:
  struct Conv {
    std::size_t weight = 0, bias = 0;
  };
  struct Block {
    std::vector<std::pair<int, Conv>> branches;  // (kernel, conv)
    Conv fusion;
    bool norm = false;
    std::size_t gamma = 0, beta = 0;
  };
  struct Level {
    bool has_up = false;
    Conv up;  // transposed conv bringing level+1 features to this scale
    std::vector<Block> blocks;
    bool has_head = false;
    Conv head;
  };
  struct Store {
    std::vector<Parameter<T>> params;
  };

  void build();
  std::size_t add_param(std::string name, int group, Shape shape, double init_bound, T fill, Rng* rng);
  Conv add_conv(const std::string& prefix, int group, int in, int out, int k, bool transposed, Rng& rng);
  const ad::Var<T>& use(std::size_t index) const;

  ad::Var<T> run_block(const Block& block, const ad::Var<T>& x) const;
  ad::Var<T> features(int level, std::vector<ad::Var<T>>& pooled) const;

  PyNetConfig config_;
  std::vector<Level> levels_;  // index level - 1
  Conv out_up1_, out_up2_;
  std::set<int> ablation_;
  std::shared_ptr<Store> store_;
};

// Returns a view of `model` with the given levels disabled.
template <class T>
PyNetModel<T> ablate_levels(const PyNetModel<T>& model, std::set<int> disabled) {
  PyNetModel<T> view = model;
  view.set_ablation_mask(std::move(disabled));
  return view;
}

}  // namespace bokeh
