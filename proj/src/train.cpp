#include "bokeh/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "bokeh/config_json.hpp"
#include "bokeh/runtime.hpp"

namespace bokeh {

namespace fs = std::filesystem;
using nlohmann::json;

TrainSchedule TrainSchedule::uniform(int model_levels, const LevelSchedule& per_level, double level1_lr_scale) {
  TrainSchedule s;
  for (int l = model_levels; l >= 1; --l) {
    s.order.push_back(l);
    s.levels[l] = per_level;
  }
  s.levels[1].lr = per_level.lr * level1_lr_scale;
  return s;
}

const LevelSchedule& TrainSchedule::at(int level) const {
  auto it = levels.find(level);
  if (it == levels.end()) throw ConfigError("schedule has no entry for level " + std::to_string(level));
  return it->second;
}

void TrainSchedule::validate(int model_levels) const {
  if (static_cast<int>(order.size()) != model_levels) {
    throw ConfigError("schedule order must list levels " + std::to_string(model_levels) + " down to 1");
  }
  for (int i = 0; i < model_levels; ++i) {
    if (order[i] != model_levels - i) {
      throw ConfigError("schedule order must be strictly descending from " + std::to_string(model_levels) +
                        " to 1");
    }
  }
  for (int l : order) {
    const LevelSchedule& s = at(l);
    if (s.epochs < 1) throw ConfigError("schedule: epochs must be >= 1 at level " + std::to_string(l));
    if (s.batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1 at level " + std::to_string(l));
    if (!(s.lr >= 0.0) || !std::isfinite(s.lr)) {
      throw ConfigError("schedule: lr must be finite and >= 0 at level " + std::to_string(l));
    }
  }
  for (const auto& [l, s] : levels) {
    if (l < 1 || l > model_levels) throw ConfigError("schedule: level " + std::to_string(l) + " not in the model");
  }
}

std::string level_checkpoint_name(int level) { return "level" + std::to_string(level) + ".pynb"; }

namespace {

json history_to_json(const std::vector<LevelLog>& history) {
  json j = json::array();
  for (const auto& l : history) j.push_back(to_json(l));
  return j;
}

std::vector<LevelLog> history_from_json(const std::string& text) {
  std::vector<LevelLog> out;
  if (text.empty()) return out;
  try {
    for (const auto& jl : json::parse(text)) {
      LevelLog l;
      l.level = jl.at("level").get<int>();
      l.step_losses = jl.at("step_losses").get<std::vector<double>>();
      for (const auto& je : jl.at("epochs")) {
        EpochRecord e;
        e.epoch = je.at("epoch").get<int>();
        e.train_loss = je.at("train_loss").get<double>();
        e.val_psnr = je.at("val_psnr").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                 : je.at("val_psnr").get<double>();
        l.epochs.push_back(e);
      }
      out.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed training history: ") + e.what());
  }
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double seconds_since_epoch() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

template <class T>
const Tensor<float>& target_for(const SamplePair& p, int level) {
  if (level == 1) return p.target;
  if (static_cast<int>(p.level_targets.size()) <= level || p.level_targets[level].empty()) {
    throw Error("sample has no level-" + std::to_string(level) + " target; call build_level_targets");
  }
  return p.level_targets[level];
}

template <class T>
double validation_psnr(const PyNetModel<T>& model, const std::vector<SamplePair>& val, int level) {
  if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& p : val) {
    const Tensor<T> pred = to_unit_range(model.predict(p.input_rgbd.cast<T>(), level));
    sum += psnr(pred, to_unit_range(target_for<T>(p, level).template cast<T>()));
  }
  return sum / static_cast<double>(val.size());
}

}  // namespace

template <class T>
TrainState<T> TrainState<T>::fresh(const PyNetConfig& config, std::uint64_t seed) {
  return TrainState{PyNetModel<T>(config), {}, TrainingCursor{}, Rng(seed), {}};
}

template <class T>
TrainState<T> TrainState<T>::from_checkpoint(Checkpoint<T> ckpt) {
  TrainState s{std::move(ckpt.model), std::move(ckpt.optimizer), std::move(ckpt.cursor), Rng(), {}};
  s.rng.load_state(s.cursor.rng_state);
  s.history = history_from_json(s.cursor.history);
  return s;
}

template <class T>
std::vector<std::uint8_t> TrainState<T>::checkpoint_bytes() const {
  TrainingCursor c = cursor;
  c.rng_state = rng.save_state();
  c.history = history_to_json(history).dump();
  return save_checkpoint(model, optimizer, c);
}

EventLog::EventLog(const fs::path& path) : os_(path, std::ios::app) {
  if (!os_) throw ConfigError("cannot open log file " + path.string());
}

void EventLog::write(json event) {
  if (!os_.is_open()) return;
  event["time"] = seconds_since_epoch();
  os_ << event.dump() << '\n';
  os_.flush();
}

template <class T>
LevelLog train_level(TrainState<T>& state, const TrainData& data, int level, const TrainSchedule& schedule,
                     const TrainIo& io, EventLog& log) {
  PyNetModel<T>& model = state.model;
  const int depth = model.config().levels;
  if (level < 1 || level > depth) throw ConfigError("train_level: level " + std::to_string(level) + " not in model");
  if (data.train.empty()) throw Error("train_level: empty training set");
  const int expected = level == depth ? 0 : level + 1;
  if (state.cursor.trained_through != expected) {
    throw Error("train_level: level " + std::to_string(level) + " requires levels " + std::to_string(level + 1) +
                ".." + std::to_string(depth) + " trained first (trained through " +
                std::to_string(state.cursor.trained_through) + ")");
  }
  const LevelSchedule& ls = schedule.at(level);
  if (ls.batch_size < 1 || ls.epochs < 1) throw ConfigError("train_level: invalid schedule entry");
  set_num_threads(schedule.deterministic ? 1 : 0);

  if (state.cursor.level != level || state.history.empty() || state.history.back().level != level) {
    // Fresh optimizer per level.
    state.cursor.level = level;
    state.cursor.epoch = 0;
    state.cursor.step = 0;
    state.cursor.best_val_psnr.reset();
    state.optimizer.clear();
    state.history.push_back(LevelLog{level, {}, {}});
  }
  LevelLog& record = state.history.back();

  std::vector<Parameter<T>*> params = model.trainable_parameters(level);
  for (auto* p : params) {
    if (!state.optimizer.count(p->name)) state.optimizer.emplace(p->name, AdamState<T>::for_shape(p->var.shape()));
  }
  // Snapshot of everything this level must not touch.
  std::map<std::string, Tensor<T>> frozen;
  for (const auto& p : model.parameters()) {
    if (std::none_of(params.begin(), params.end(), [&](const Parameter<T>* q) { return q == &p; })) {
      frozen.emplace(p.name, p.var.value());
    }
  }

  std::vector<Tensor<T>> inputs, targets;
  for (const auto& p : data.train) {
    inputs.push_back(p.input_rgbd.cast<T>());
    targets.push_back(to_unit_range(target_for<T>(p, level).template cast<T>()));
  }
  const FeatureExtractor<T> extractor;
  const std::size_t n = data.train.size();
  const std::size_t batch = static_cast<std::size_t>(ls.batch_size);
  const std::size_t steps = (n + batch - 1) / batch;

  auto write_checkpoint = [&](const char* name) {
    if (io.out_dir.empty()) return;
    write_file(io.out_dir / name, state.checkpoint_bytes());
  };

  for (int epoch = state.cursor.epoch; epoch < ls.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(state.rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      model.zero_grads();
      const std::size_t begin = s * batch, end = std::min(n, begin + batch);
      const T scale = T(1.0 / static_cast<double>(end - begin));
      double loss_sum = 0.0, l1_sum = 0.0, ssim_sum = 0.0, feat_sum = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        const ad::Var<T> pred = to_unit_range(model.forward(ad::constant(inputs[i]), level));
        const ad::Var<T> target = ad::constant(targets[i]);
        ad::Var<T> loss;
        if (level == 1) {
          Level1Loss<T> parts = level1_loss(pred, target, extractor);
          loss = parts.total;
          l1_sum += parts.l1;
          ssim_sum += parts.ssim;
          feat_sum += parts.feature;
        } else {
          loss = ad::l1_loss(pred, target);
          l1_sum += static_cast<double>(loss.value()[0]);
        }
        loss_sum += static_cast<double>(loss.value()[0]);
        ad::backward(loss, scale);
      }
      for (auto* p : params) adam_step(p->var.mutable_value(), p->var.grad(), state.optimizer.at(p->name), ls.lr);
      model.zero_grads();
      ++state.cursor.step;

      const double k = static_cast<double>(end - begin);
      const double step_loss = loss_sum / k;
      record.step_losses.push_back(step_loss);
      epoch_loss += step_loss;
      json ev{{"event", "step"}, {"level", level}, {"epoch", epoch + 1}, {"step", state.cursor.step},
              {"loss", step_loss}, {"l1", l1_sum / k}};
      if (level == 1) {
        ev["ssim"] = ssim_sum / k;
        ev["feature"] = feat_sum / k;
      }
      log.write(std::move(ev));
    }

    const double val = validation_psnr(model, data.val, level);
    state.cursor.epoch = epoch + 1;
    record.epochs.push_back(EpochRecord{epoch + 1, epoch_loss / static_cast<double>(steps), val});
    log.write({{"event", "epoch"},
               {"level", level},
               {"epoch", epoch + 1},
               {"train_loss", epoch_loss / static_cast<double>(steps)},
               {"val_psnr", number_or_null(val)}});
    const bool improved =
        std::isfinite(val) && (!state.cursor.best_val_psnr || val > *state.cursor.best_val_psnr);
    if (improved) {
      state.cursor.best_val_psnr = val;
      write_checkpoint(kBestCheckpoint);
    }
    if ((epoch + 1) % std::max(1, io.checkpoint_every) == 0 || epoch + 1 == ls.epochs) {
      write_checkpoint(kLastCheckpoint);
    }
  }

  for (const auto& p : model.parameters()) {
    auto it = frozen.find(p.name);
    if (it != frozen.end() && !(it->second == p.var.value())) {
      throw Error("train_level: parameter " + p.name + " of a shallower level changed while training level " +
                  std::to_string(level));
    }
  }
  state.cursor.trained_through = level;
  write_checkpoint(kLastCheckpoint);
  write_checkpoint(level_checkpoint_name(level).c_str());
  log.write({{"event", "level_done"}, {"level", level}, {"steps", state.cursor.step}});
  return record;
}

Aggregate aggregate(std::vector<double> values) {
  Aggregate a;
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  a.median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  return a;
}

Tensor<float> nearest_upscale2(const Tensor<float>& input_rgbd) {
  const std::size_t h = input_rgbd.height(), w = input_rgbd.width();
  Tensor<float> out({3, 2 * h, 2 * w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t x = 0; x < 2 * w; ++x) out.at(c, y, x) = input_rgbd.at(c, y / 2, x / 2);
  return out;
}

template <class T>
EvalReport evaluate(const PyNetModel<T>& model, const std::vector<SamplePair>& samples,
                    const std::string& split_name) {
  if (samples.empty()) throw Error("evaluate: split '" + split_name + "' is empty");
  EvalReport r;
  r.split = split_name;
  std::vector<double> p, s, bp, bs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SamplePair& sp = samples[i];
    const Tensor<double> target = to_unit_range(sp.target.cast<double>());
    const Tensor<double> pred = to_unit_range(model.predict(sp.input_rgbd.cast<T>(), 1)).template cast<double>();
    const Tensor<double> base = to_unit_range(nearest_upscale2(sp.input_rgbd).cast<double>());
    ImageScore score{i, psnr(pred, target), ssim_value(pred, target), psnr(base, target), ssim_value(base, target)};
    p.push_back(score.psnr);
    s.push_back(score.ssim);
    bp.push_back(score.baseline_psnr);
    bs.push_back(score.baseline_ssim);
    r.images.push_back(score);
  }
  r.psnr = aggregate(p);
  r.ssim = aggregate(s);
  r.baseline_psnr = aggregate(bp);
  r.baseline_ssim = aggregate(bs);
  r.psnr_margin = r.psnr.mean - r.baseline_psnr.mean;
  r.ssim_margin = r.ssim.mean - r.baseline_ssim.mean;
  return r;
}

namespace {
json to_json(const Aggregate& a) { return {{"mean", a.mean}, {"median", a.median}}; }
}  // namespace

json to_json(const EvalReport& r) {
  json images = json::array();
  for (const auto& s : r.images) {
    images.push_back({{"index", s.index},
                      {"psnr", s.psnr},
                      {"ssim", s.ssim},
                      {"baseline_psnr", s.baseline_psnr},
                      {"baseline_ssim", s.baseline_ssim}});
  }
  return {{"split", r.split},
          {"count", r.images.size()},
          {"images", images},
          {"psnr", to_json(r.psnr)},
          {"ssim", to_json(r.ssim)},
          {"baseline", {{"method", "nearest_neighbor_2x"}, {"psnr", to_json(r.baseline_psnr)},
                        {"ssim", to_json(r.baseline_ssim)}}},
          {"margin", {{"psnr_db", r.psnr_margin}, {"ssim", r.ssim_margin}}}};
}

json to_json(const LevelLog& l) {
  json epochs = json::array();
  for (const auto& e : l.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_psnr", number_or_null(e.val_psnr)}});
  }
  return {{"level", l.level}, {"steps", l.step_losses.size()}, {"step_losses", l.step_losses}, {"epochs", epochs}};
}

json to_json(const TrainSchedule& s) {
  json levels = json::object();
  for (const auto& [l, ls] : s.levels) {
    levels[std::to_string(l)] = {{"epochs", ls.epochs}, {"batch_size", ls.batch_size}, {"lr", ls.lr}};
  }
  return {{"order", s.order}, {"levels", levels}, {"seed", s.seed}, {"deterministic", s.deterministic}};
}

json RunReport::to_json() const {
  json lv = json::array();
  for (const auto& l : levels) lv.push_back(bokeh::to_json(l));
  return {{"executed_order", executed_order},
          {"levels", lv},
          {"test", test ? bokeh::to_json(*test) : json(nullptr)}};
}

template <class T>
RunReport train_progressive(TrainState<T>& state, const TrainData& data, const TrainSchedule& schedule,
                            const TrainIo& io) {
  const int depth = state.model.config().levels;
  schedule.validate(depth);
  if (data.train.empty()) throw Error("train_progressive: empty training set");
  EventLog log;
  if (!io.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(io.out_dir, ec);
    if (ec || !fs::is_directory(io.out_dir)) throw ConfigError("cannot create output directory " + io.out_dir.string());
    log = EventLog(io.out_dir / kLogName);
  }
  log.write({{"event", "run_start"},
             {"model", to_json(state.model.config())},
             {"schedule", to_json(schedule)},
             {"resumed", state.cursor.level != 0}});

  for (int level : schedule.order) {
    if (state.cursor.trained_through != 0 && level >= state.cursor.trained_through) continue;
    train_level(state, data, level, schedule, io, log);
    if (io.stop_after_level && *io.stop_after_level == level) break;
  }

  RunReport report;
  report.levels = state.history;
  for (const auto& l : state.history) report.executed_order.push_back(l.level);
  if (state.cursor.trained_through == 1 && !data.test.empty()) {
    report.test = evaluate(state.model, data.test, "test");
  }
  json doc = report.to_json();
  doc["model"] = to_json(state.model.config());
  doc["schedule"] = to_json(schedule);
  doc["param_count"] = state.model.param_count();
  log.write({{"event", "run_done"}, {"trained_through", state.cursor.trained_through}});
  if (!io.out_dir.empty()) {
    std::ofstream os(io.out_dir / kReportName);
    os << doc.dump(2) << '\n';
    if (!os) throw FormatError("cannot write report in " + io.out_dir.string());
  }
  return report;
}

#define BOKEH_INSTANTIATE_TRAIN(T)                                                                          \
  template struct TrainState<T>;                                                                            \
  template LevelLog train_level<T>(TrainState<T>&, const TrainData&, int, const TrainSchedule&,             \
                                   const TrainIo&, EventLog&);                                              \
  template EvalReport evaluate<T>(const PyNetModel<T>&, const std::vector<SamplePair>&, const std::string&); \
  template RunReport train_progressive<T>(TrainState<T>&, const TrainData&, const TrainSchedule&, const TrainIo&);

BOKEH_INSTANTIATE_TRAIN(float)
BOKEH_INSTANTIATE_TRAIN(double)

}  // namespace bokeh
