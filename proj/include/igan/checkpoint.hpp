#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "igan/architecture.hpp"
#include "igan/tensor.hpp"
#include "igan/train.hpp"

// Binary checkpoint layout (all integers little-endian):
//
//   "IGAN"            4 bytes magic
//   u32 version       kCheckpointVersion
//   u32 rng id        Rng::kAlgorithmId
//   u32 count         number of entries
//   directory, sorted by name, one record per entry:
//     u32 name length, name bytes (UTF-8)
//     u8  dtype       1 = f32, 2 = f64, 3 = u64, 4 = raw bytes
//     u32 rank, then rank x u64 extents
//     u64 offset      from the start of the payload section
//     u64 size        in bytes
//   payload section   entry payloads back to back, in directory order
//
// Entry names:
//   param/<name>                  trainable tensors (f32)
//   buffer/<name>                 BN running statistics, SN u/v (f32)
//   adam/{G,D}/{m,v}/<name>       Adam moments (f64), adam/{G,D}/t (u64)
//   state/step, state/rng         (u64)
//   history/g_loss, history/d_loss (f64)
//   alloc/{G,D1,D2}               full-width inception allocations (u64 fields)
//   meta/config                   resolved TrainConfig as key = value text

namespace igan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F32 = 1, F64 = 2, U64 = 3, Bytes = 4 };

struct ArchiveEntry {
  DType dtype = DType::Bytes;
  Shape shape;
  std::vector<std::uint8_t> payload;
};

/// Named typed arrays with a deterministic serialization.
class Archive {
 public:
  void put_f32(const std::string& name, Shape shape, std::span<const float> values);
  void put_f64(const std::string& name, std::span<const double> values);
  void put_u64(const std::string& name, std::span<const std::uint64_t> values);
  void put_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ArchiveEntry& entry(const std::string& name) const;
  std::vector<float> get_f32(const std::string& name) const;
  std::vector<double> get_f64(const std::string& name) const;
  std::vector<std::uint64_t> get_u64(const std::string& name) const;
  std::string get_text(const std::string& name) const;
  const std::map<std::string, ArchiveEntry>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const;
  static Archive parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::map<std::string, ArchiveEntry> entries_;
};

/// Snapshot of everything needed to resume `trainer` bit-exactly.
Archive make_checkpoint(Trainer& trainer);
/// Writes a snapshot back into a trainer built with the same architecture and
/// config. Throws CheckpointError on any missing entry or shape mismatch.
void restore_checkpoint(Trainer& trainer, const Archive& archive);

/// Architecture and config recorded in a checkpoint.
Architecture checkpoint_architecture(const Archive& archive);
TrainConfig checkpoint_config(const Archive& archive);

// key = value rendering of TrainConfig, shared with the CLI config format.
std::string config_to_text(const TrainConfig& cfg);
/// Applies one key; returns false if the key is unknown. Throws
/// std::invalid_argument on a malformed value.
bool apply_config_key(TrainConfig& cfg, const std::string& key, const std::string& value);

}  // namespace igan
