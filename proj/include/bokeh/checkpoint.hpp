#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bokeh/adam.hpp"
#include "bokeh/pynet.hpp"

// Binary checkpoint layout (all integers little-endian):
//
//   "PYNB"                      4-byte magic
//   u16 version                 kCheckpointVersion
//   u32 length, bytes           JSON: precision, model config, cursor, optimizer scalars
//   u32 record count
//   records:
//     u16 name length, name
//     u8  dtype                 1 = f32, 2 = f64
//     u8  rank, u32 extents[rank]
//     payload                   product(extents) little-endian floats
//   u32 CRC32 of every preceding byte
namespace bokeh {

inline constexpr char kCheckpointMagic[4] = {'P', 'Y', 'N', 'B'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { kVersion, kTruncated, kCorrupt, kShape };

class CheckpointError : public FormatError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// Where a training run stands; enough to resume it exactly.
struct TrainingCursor {
  int level = 0;               // level being trained, 0 before the first
  int epoch = 0;               // epochs completed at `level`
  std::int64_t step = 0;       // optimizer steps taken at `level`
  int trained_through = 0;     // shallowest level whose training finished, 0 if none
  std::string rng_state;       // shuffling generator
  std::optional<double> best_val_psnr;
  std::string history;         // JSON text of per-level training curves

  friend bool operator==(const TrainingCursor&, const TrainingCursor&) = default;
};

template <class T>
using OptimizerStates = std::map<std::string, AdamState<T>>;

template <class T>
struct Checkpoint {
  PyNetModel<T> model;
  OptimizerStates<T> optimizer;
  TrainingCursor cursor;
};

template <class T>
std::vector<std::uint8_t> save_checkpoint(const PyNetModel<T>& model, const OptimizerStates<T>& optimizer,
                                          const TrainingCursor& cursor);

// Throws CheckpointError; nothing is returned unless the whole stream
// verifies.
template <class T>
Checkpoint<T> load_checkpoint(std::span<const std::uint8_t> bytes);

// "f32" or "f64", read from the header without building a model.
std::string checkpoint_precision(std::span<const std::uint8_t> bytes);

// Single-record encoding used inside checkpoints; handy for dumping tensors.
template <class T>
void append_tensor_record(std::vector<std::uint8_t>& out, const std::string& name, const Tensor<T>& tensor);

// Writes a standalone checkpoint-format file holding only `tensors`.
template <class T>
std::vector<std::uint8_t> dump_tensors(const std::map<std::string, Tensor<T>>& tensors);
template <class T>
std::map<std::string, Tensor<T>> read_tensor_dump(std::span<const std::uint8_t> bytes);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace bokeh
