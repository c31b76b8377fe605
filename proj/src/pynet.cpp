#include "bokeh/pynet.hpp"

#include <algorithm>
#include <cmath>

#include "bokeh/ops.hpp"

namespace bokeh {

PyNetConfig PyNetConfig::resolved() const {
  PyNetConfig c = *this;
  if (c.kernel_sets.empty() && c.levels >= 1) {
    for (int l = 1; l <= c.levels; ++l) {
      switch (l) {
        case 1: c.kernel_sets.push_back({3}); break;
        case 2: c.kernel_sets.push_back({3, 5}); break;
        case 3: c.kernel_sets.push_back({3, 5, 7}); break;
        default: c.kernel_sets.push_back({3, 5, 7, 9}); break;
      }
    }
  }
  if (c.instance_norm_levels.empty()) {
    for (int l = 2; l <= std::min(5, c.levels); ++l) c.instance_norm_levels.insert(l);
  }
  return c;
}

void PyNetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("PyNetConfig: " + msg); };
  if (levels < 3 || levels > 7) fail("levels must lie in [3, 7], got " + std::to_string(levels));
  if (base_width < 4) fail("base_width must be >= 4, got " + std::to_string(base_width));
  if (width_cap_multiplier < 1) fail("width_cap_multiplier must be >= 1");
  if (input_channels != 3 && input_channels != 4) {
    fail("input_channels must be 3 (RGB) or 4 (RGB + depth), got " + std::to_string(input_channels));
  }
  const int factor = 1 << (levels - 1);
  if (input_size <= 0 || input_size % factor != 0) {
    fail("input_size " + std::to_string(input_size) + " is not divisible by 2^(levels-1) = " +
         std::to_string(factor));
  }
  if (input_size / factor < 4) {
    fail("deepest level would be " + std::to_string(input_size / factor) + " px, needs >= 4");
  }
  if (static_cast<int>(kernel_sets.size()) != levels) {
    fail("kernel_sets must have one entry per level (" + std::to_string(levels) + "), got " +
         std::to_string(kernel_sets.size()));
  }
  for (std::size_t i = 0; i < kernel_sets.size(); ++i) {
    if (kernel_sets[i].empty()) fail("kernel set of level " + std::to_string(i + 1) + " is empty");
    for (int k : kernel_sets[i]) {
      if (k < 1 || k % 2 == 0 || k > 9) {
        fail("kernel " + std::to_string(k) + " at level " + std::to_string(i + 1) + " must be odd and <= 9");
      }
    }
  }
  for (int l : instance_norm_levels) {
    if (l < 2 || l > levels) {
      fail("instance_norm_levels may only contain levels 2.." + std::to_string(levels) + ", got " +
           std::to_string(l));
    }
  }
}

int PyNetConfig::width(int level) const {
  return std::min(base_width << (level - 1), base_width * width_cap_multiplier);
}

template <class T>
PyNetModel<T>::PyNetModel(const PyNetConfig& config)
    : config_(config.resolved()), store_(std::make_shared<Store>()) {
  config_.validate();
  build();
}

template <class T>
std::size_t PyNetModel<T>::add_param(std::string name, int group, Shape shape, double init_bound, T fill,
                                     Rng* rng) {
  Tensor<T> value(std::move(shape), fill);
  if (rng) {
    for (auto& v : value.data()) v = static_cast<T>(rng->uniform(-init_bound, init_bound));
  }
  store_->params.push_back(Parameter<T>{std::move(name), group, ad::leaf(std::move(value)), 0});
  return store_->params.size() - 1;
}

template <class T>
typename PyNetModel<T>::Conv PyNetModel<T>::add_conv(const std::string& prefix, int group, int in, int out, int k,
                                                     bool transposed, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>((in + out) * k * k));
  const auto ui = static_cast<std::size_t>(in), uo = static_cast<std::size_t>(out), uk = static_cast<std::size_t>(k);
  Shape shape = transposed ? Shape{ui, uo, uk, uk} : Shape{uo, ui, uk, uk};
  Conv c;
  c.weight = add_param(prefix + ".w", group, std::move(shape), bound, T{0}, &rng);
  c.bias = add_param(prefix + ".b", group, {uo}, 0.0, T{0}, nullptr);
  return c;
}

template <class T>
void PyNetModel<T>::build() {
  Rng rng(config_.seed);
  const int top = config_.levels;
  levels_.assign(static_cast<std::size_t>(top), Level{});
  // Deepest level first, so a level's parameters never depend on how many
  // shallower levels exist.
  for (int l = top; l >= 1; --l) {
    Level& lv = levels_[static_cast<std::size_t>(l - 1)];
    const std::string p = "l" + std::to_string(l);
    const int w = config_.width(l);
    int in = config_.input_channels;
    if (l < top) {
      lv.has_up = true;
      lv.up = add_conv(p + ".up", l, config_.width(l + 1), w, 2, true, rng);
      in += w;
    }
    for (int b = 0; b < config_.block_repeats(l); ++b) {
      Block blk;
      const std::string bp = p + ".b" + std::to_string(b);
      const int block_in = b == 0 ? in : w;
      for (int k : config_.kernels(l)) {
        blk.branches.emplace_back(k, add_conv(bp + ".k" + std::to_string(k), l, block_in, w, k, false, rng));
      }
      const int cat = w * static_cast<int>(blk.branches.size());
      blk.fusion = add_conv(bp + ".fuse", l, cat, w, 3, false, rng);
      if (config_.normalized(l)) {
        blk.norm = true;
        blk.gamma = add_param(bp + ".norm.gamma", l, {static_cast<std::size_t>(w)}, 0.0, T{1}, nullptr);
        blk.beta = add_param(bp + ".norm.beta", l, {static_cast<std::size_t>(w)}, 0.0, T{0}, nullptr);
      }
      lv.blocks.push_back(std::move(blk));
    }
    if (l >= 2) {
      lv.has_head = true;
      lv.head = add_conv(p + ".head", l, w, 3, 3, false, rng);
    }
  }
  const int w1 = config_.width(1);
  out_up1_ = add_conv("out.up1", kOutputGroup, w1, w1, 2, true, rng);
  out_up2_ = add_conv("out.up2", kOutputGroup, w1, 3, 1, true, rng);
}

template <class T>
const ad::Var<T>& PyNetModel<T>::use(std::size_t index) const {
  const Parameter<T>& p = store_->params[index];
  ++p.uses;
  return p.var;
}

template <class T>
ad::Var<T> PyNetModel<T>::run_block(const Block& block, const ad::Var<T>& x) const {
  const T alpha = static_cast<T>(PyNetConfig::kLeakyAlpha);
  std::vector<ad::Var<T>> branches;
  for (const auto& [k, conv] : block.branches) {
    branches.push_back(ad::leaky_relu(ad::conv2d(x, use(conv.weight), use(conv.bias), 1, k / 2), alpha));
  }
  ad::Var<T> cat = branches.size() == 1 ? branches[0] : ad::concat_channels(branches);
  ad::Var<T> s = ad::conv2d(cat, use(block.fusion.weight), use(block.fusion.bias), 1, 1);
  for (const auto& b : branches) s = ad::add(s, b);
  if (block.norm) {
    s = ad::instance_norm(s, use(block.gamma), use(block.beta), static_cast<T>(PyNetConfig::kNormEps));
  }
  return ad::leaky_relu(s, alpha);
}

template <class T>
ad::Var<T> PyNetModel<T>::features(int level, std::vector<ad::Var<T>>& pooled) const {
  const auto li = static_cast<std::size_t>(level - 1);
  if (ablation_.count(level)) {
    const auto s = static_cast<std::size_t>(config_.scale(level));
    return ad::constant(Tensor<T>({static_cast<std::size_t>(config_.width(level)), s, s}));
  }
  for (std::size_t i = 1; i <= li; ++i) {
    if (!pooled[i]) pooled[i] = ad::maxpool2(pooled[i - 1]);
  }
  const Level& lv = levels_[li];
  ad::Var<T> x = pooled[li];
  if (lv.has_up) {
    ad::Var<T> deeper = features(level + 1, pooled);
    ad::Var<T> up = ad::leaky_relu(ad::conv2d_transpose(deeper, use(lv.up.weight), use(lv.up.bias), 2),
                                   static_cast<T>(PyNetConfig::kLeakyAlpha));
    x = ad::concat_channels(x, up);
  }
  for (const Block& b : lv.blocks) x = run_block(b, x);
  return x;
}

template <class T>
ad::Var<T> PyNetModel<T>::forward(const ad::Var<T>& input, int level) const {
  if (level < 1 || level > config_.levels) {
    throw ConfigError("forward: level " + std::to_string(level) + " outside [1, " +
                      std::to_string(config_.levels) + "]");
  }
  const Shape expected{static_cast<std::size_t>(config_.input_channels),
                       static_cast<std::size_t>(config_.input_size),
                       static_cast<std::size_t>(config_.input_size)};
  if (input.shape() != expected) {
    throw ShapeError("forward: input shape " + to_string(input.shape()) + " does not match expected " +
                     to_string(expected));
  }
  std::vector<ad::Var<T>> pooled(static_cast<std::size_t>(config_.levels));
  pooled[0] = input;
  ad::Var<T> f = features(level, pooled);
  if (level >= 2) {
    const Level& lv = levels_[static_cast<std::size_t>(level - 1)];
    return ad::tanh_act(ad::conv2d(f, use(lv.head.weight), use(lv.head.bias), 1, 1));
  }
  ad::Var<T> up = ad::leaky_relu(ad::conv2d_transpose(f, use(out_up1_.weight), use(out_up1_.bias), 2),
                                 static_cast<T>(PyNetConfig::kLeakyAlpha));
  return ad::tanh_act(ad::conv2d_transpose(up, use(out_up2_.weight), use(out_up2_.bias), 1));
}

template <class T>
Tensor<T> PyNetModel<T>::predict(const Tensor<T>& input, int level) const {
  return forward(ad::constant(input), level).value();
}

template <class T>
void PyNetModel<T>::set_ablation_mask(std::set<int> disabled) {
  for (int l : disabled) {
    if (l < 4 || l > config_.levels) {
      throw ConfigError("ablation: level " + std::to_string(l) + " cannot be disabled; allowed range is 4.." +
                        std::to_string(config_.levels));
    }
  }
  ablation_ = std::move(disabled);
}

template <class T>
const Parameter<T>& PyNetModel<T>::parameter(const std::string& name) const {
  for (const auto& p : store_->params) {
    if (p.name == name) return p;
  }
  throw Error("no parameter named " + name);
}

template <class T>
Parameter<T>& PyNetModel<T>::parameter(const std::string& name) {
  return const_cast<Parameter<T>&>(std::as_const(*this).parameter(name));
}

template <class T>
std::vector<Parameter<T>*> PyNetModel<T>::trainable_parameters(int level) {
  if (level < 1 || level > config_.levels) {
    throw ConfigError("trainable_parameters: level " + std::to_string(level) + " out of range");
  }
  std::vector<Parameter<T>*> out;
  for (auto& p : store_->params) {
    if (p.group >= level || (level == 1 && p.group == kOutputGroup)) out.push_back(&p);
  }
  return out;
}

template <class T>
std::size_t PyNetModel<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : store_->params) n += p.numel();
  return n;
}

template <class T>
void PyNetModel<T>::zero_grads() {
  for (auto& p : store_->params) p.var.zero_grad();
}

template <class T>
void PyNetModel<T>::reset_use_counters() const {
  for (const auto& p : store_->params) p.uses = 0;
}

template <class T>
PyNetModel<T> PyNetModel<T>::with_input_size(int input_size) const {
  PyNetModel view = *this;
  view.config_.input_size = input_size;
  view.config_.validate();
  return view;
}

template <class T>
PyNetModel<T> PyNetModel<T>::clone() const {
  PyNetModel copy = *this;
  copy.store_ = std::make_shared<Store>();
  for (const auto& p : store_->params) {
    copy.store_->params.push_back(Parameter<T>{p.name, p.group, ad::leaf(p.var.value()), 0});
  }
  return copy;
}

template class PyNetModel<float>;
template class PyNetModel<double>;

}  // namespace bokeh
