#include "bokeh/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "bokeh/config_json.hpp"

namespace bokeh {

using nlohmann::json;

namespace {

template <class T>
constexpr std::uint8_t dtype_code() {
  return sizeof(T) == 4 ? 1 : 2;
}

template <class T>
constexpr const char* precision_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
void put_float(std::vector<std::uint8_t>& out, T v) {
  if constexpr (sizeof(T) == 4) {
    put_le(out, std::bit_cast<std::uint32_t>(v));
  } else {
    put_le(out, std::bit_cast<std::uint64_t>(v));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint: stream truncated");
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U le() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct RawRecord {
  std::string name;
  std::uint8_t dtype = 0;
  Shape shape;
  std::span<const std::uint8_t> payload;
};

struct Container {
  json header;
  std::vector<RawRecord> records;
};

std::vector<std::uint8_t> encode_container(const json& header, const std::vector<std::uint8_t>& records,
                                           std::uint32_t count) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_le<std::uint16_t>(out, kCheckpointVersion);
  const std::string blob = header.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
  put_le<std::uint32_t>(out, count);
  out.insert(out.end(), records.begin(), records.end());
  put_le<std::uint32_t>(out, crc32_of(out));
  return out;
}

void check_preamble(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6) throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint: stream truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::kVersion, "checkpoint: bad magic, not a PYNB stream");
  }
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::kVersion,
                          "checkpoint: unsupported format version " + std::to_string(version));
  }
}

Container decode_container(std::span<const std::uint8_t> bytes) {
  check_preamble(bytes);
  Reader r(bytes);
  r.take(6);
  Container c;
  const auto blob_len = r.le<std::uint32_t>();
  const auto blob = r.take(blob_len);
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    RawRecord rec;
    const auto name_len = r.le<std::uint16_t>();
    const auto name = r.take(name_len);
    rec.name.assign(name.begin(), name.end());
    rec.dtype = r.le<std::uint8_t>();
    if (rec.dtype != 1 && rec.dtype != 2) {
      throw CheckpointError(CheckpointErrorKind::kCorrupt, "checkpoint: unknown dtype code in " + rec.name);
    }
    const auto rank = r.le<std::uint8_t>();
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto e = r.le<std::uint32_t>();
      if (e == 0) throw CheckpointError(CheckpointErrorKind::kCorrupt, "checkpoint: zero extent in " + rec.name);
      rec.shape.push_back(e);
      numel *= e;
      if (numel > r.remaining()) {
        throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint: stream truncated");
      }
    }
    rec.payload = r.take(numel * (rec.dtype == 1 ? 4 : 8));
    c.records.push_back(std::move(rec));
  }
  const std::size_t body = r.pos();
  const auto stored = r.le<std::uint32_t>();
  if (r.remaining() != 0) throw CheckpointError(CheckpointErrorKind::kCorrupt, "checkpoint: trailing bytes");
  if (crc32_of(bytes.first(body)) != stored) {
    throw CheckpointError(CheckpointErrorKind::kCorrupt, "checkpoint: CRC mismatch");
  }
  try {
    c.header = json::parse(blob.begin(), blob.end());
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::kCorrupt, std::string("checkpoint: bad header JSON: ") + e.what());
  }
  return c;
}

template <class T>
Tensor<T> to_tensor(const RawRecord& rec) {
  if (rec.dtype != dtype_code<T>()) {
    throw CheckpointError(CheckpointErrorKind::kShape,
                          "checkpoint: record " + rec.name + " has dtype code " + std::to_string(rec.dtype) +
                              ", expected " + std::to_string(dtype_code<T>()));
  }
  Tensor<T> t(rec.shape);
  Reader r(rec.payload);
  for (auto& v : t.data()) {
    if constexpr (sizeof(T) == 4) {
      v = std::bit_cast<T>(r.le<std::uint32_t>());
    } else {
      v = std::bit_cast<T>(r.le<std::uint64_t>());
    }
  }
  return t;
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class T>
void append_tensor_record(std::vector<std::uint8_t>& out, const std::string& name, const Tensor<T>& tensor) {
  if (name.size() > 0xFFFF) throw ConfigError("tensor record name too long");
  if (tensor.rank() > 0xFF) throw ConfigError("tensor record rank too large");
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u8(out, dtype_code<T>());
  put_u8(out, static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t e : tensor.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  for (T v : tensor.data()) put_float(out, v);
}

template <class T>
std::vector<std::uint8_t> save_checkpoint(const PyNetModel<T>& model, const OptimizerStates<T>& optimizer,
                                          const TrainingCursor& cursor) {
  json header;
  header["precision"] = precision_name<T>();
  header["model"] = to_json(model.config());
  json cur{{"level", cursor.level},
           {"epoch", cursor.epoch},
           {"step", cursor.step},
           {"trained_through", cursor.trained_through},
           {"rng_state", cursor.rng_state}};
  cur["best_val_psnr"] = cursor.best_val_psnr ? json(*cursor.best_val_psnr) : json(nullptr);
  cur["history"] = cursor.history;
  header["cursor"] = cur;
  json opt = json::object();
  for (const auto& [name, st] : optimizer) {
    opt[name] = {{"step", st.step}, {"beta1", st.beta1}, {"beta2", st.beta2}, {"epsilon", st.epsilon}};
  }
  header["optimizer"] = opt;

  std::vector<std::uint8_t> records;
  std::uint32_t count = 0;
  for (const auto& p : model.parameters()) {
    append_tensor_record(records, p.name, p.var.value());
    ++count;
  }
  for (const auto& [name, st] : optimizer) {
    append_tensor_record(records, "adam/" + name + "/m", st.m);
    append_tensor_record(records, "adam/" + name + "/v", st.v);
    count += 2;
  }
  return encode_container(header, records, count);
}

template <class T>
Checkpoint<T> load_checkpoint(std::span<const std::uint8_t> bytes) {
  Container c = decode_container(bytes);
  std::map<std::string, const RawRecord*> by_name;
  for (const auto& r : c.records) by_name[r.name] = &r;
  try {
    if (c.header.at("precision").get<std::string>() != precision_name<T>()) {
      throw CheckpointError(CheckpointErrorKind::kShape,
                            "checkpoint: stored precision " + c.header.at("precision").get<std::string>() +
                                " does not match requested " + precision_name<T>());
    }
    PyNetConfig config;
    try {
      config = pynet_config_from_json(c.header.at("model"));
    } catch (const ConfigError& e) {
      throw CheckpointError(CheckpointErrorKind::kShape, std::string("checkpoint: ") + e.what());
    }
    PyNetModel<T> model(config);
    for (auto& p : model.parameters()) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) {
        throw CheckpointError(CheckpointErrorKind::kShape, "checkpoint: missing parameter " + p.name);
      }
      Tensor<T> t = to_tensor<T>(*it->second);
      if (t.shape() != p.var.value().shape()) {
        throw CheckpointError(CheckpointErrorKind::kShape, "checkpoint: parameter " + p.name + " has shape " +
                                                               to_string(t.shape()) + ", config implies " +
                                                               to_string(p.var.value().shape()));
      }
      p.var.mutable_value() = std::move(t);
    }

    OptimizerStates<T> optimizer;
    for (const auto& item : c.header.at("optimizer").items()) {
      const std::string name = item.key();
      const json& s = item.value();
      AdamState<T> st;
      st.step = s.at("step").get<std::int64_t>();
      st.beta1 = s.at("beta1").get<double>();
      st.beta2 = s.at("beta2").get<double>();
      st.epsilon = s.at("epsilon").get<double>();
      auto m = by_name.find("adam/" + name + "/m");
      auto v = by_name.find("adam/" + name + "/v");
      if (m == by_name.end() || v == by_name.end()) {
        throw CheckpointError(CheckpointErrorKind::kShape, "checkpoint: missing optimizer moments for " + name);
      }
      st.m = to_tensor<T>(*m->second);
      st.v = to_tensor<T>(*v->second);
      if (st.m.shape() != model.parameter(name).var.value().shape() || st.v.shape() != st.m.shape()) {
        throw CheckpointError(CheckpointErrorKind::kShape, "checkpoint: optimizer moments for " + name +
                                                               " disagree with the parameter shape");
      }
      optimizer.emplace(name, std::move(st));
    }

    const json& cur = c.header.at("cursor");
    TrainingCursor cursor;
    cursor.level = cur.at("level").get<int>();
    cursor.epoch = cur.at("epoch").get<int>();
    cursor.step = cur.at("step").get<std::int64_t>();
    cursor.trained_through = cur.at("trained_through").get<int>();
    cursor.rng_state = cur.at("rng_state").get<std::string>();
    cursor.history = cur.at("history").get<std::string>();
    if (!cur.at("best_val_psnr").is_null()) cursor.best_val_psnr = cur.at("best_val_psnr").get<double>();
    return Checkpoint<T>{std::move(model), std::move(optimizer), std::move(cursor)};
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::kCorrupt, std::string("checkpoint: malformed header: ") + e.what());
  } catch (const Error& e) {
    if (dynamic_cast<const CheckpointError*>(&e)) throw;
    throw CheckpointError(CheckpointErrorKind::kShape, std::string("checkpoint: ") + e.what());
  }
}

std::string checkpoint_precision(std::span<const std::uint8_t> bytes) {
  Container c = decode_container(bytes);
  try {
    return c.header.at("precision").get<std::string>();
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::kCorrupt, std::string("checkpoint: malformed header: ") + e.what());
  }
}

template <class T>
std::vector<std::uint8_t> dump_tensors(const std::map<std::string, Tensor<T>>& tensors) {
  std::vector<std::uint8_t> records;
  for (const auto& [name, t] : tensors) append_tensor_record(records, name, t);
  return encode_container(json{{"precision", precision_name<T>()}}, records,
                          static_cast<std::uint32_t>(tensors.size()));
}

template <class T>
std::map<std::string, Tensor<T>> read_tensor_dump(std::span<const std::uint8_t> bytes) {
  Container c = decode_container(bytes);
  std::map<std::string, Tensor<T>> out;
  for (const auto& r : c.records) out.emplace(r.name, to_tensor<T>(r));
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  // Write-then-rename so a crash never leaves a half-written checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

#define BOKEH_INSTANTIATE_CKPT(T)                                                                           \
  template void append_tensor_record<T>(std::vector<std::uint8_t>&, const std::string&, const Tensor<T>&); \
  template std::vector<std::uint8_t> save_checkpoint<T>(const PyNetModel<T>&, const OptimizerStates<T>&,   \
                                                        const TrainingCursor&);                             \
  template Checkpoint<T> load_checkpoint<T>(std::span<const std::uint8_t>);                                 \
  template std::vector<std::uint8_t> dump_tensors<T>(const std::map<std::string, Tensor<T>>&);             \
  template std::map<std::string, Tensor<T>> read_tensor_dump<T>(std::span<const std::uint8_t>);

BOKEH_INSTANTIATE_CKPT(float)
BOKEH_INSTANTIATE_CKPT(double)

}  // namespace bokeh
