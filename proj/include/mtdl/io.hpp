#pragma once

// File formats. All CSVs have a header row, '.' decimal separator and LF
// line endings. Probabilities are written with 9 significant digits,
// features and losses with 17 (exact double round trip).

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtdl/dataset_sim.hpp"
#include "mtdl/metrics.hpp"
#include "mtdl/mtnet.hpp"
#include "mtdl/stage_model.hpp"

namespace mtdl::io {

namespace fs = std::filesystem;

std::string format_double(double v, int significant_digits);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const fs::path& path, std::string_view contents);
std::string read_file(const fs::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

// ---- simulated videos: frame,label,f1..fd ----
std::string video_csv(const SimVideo& v);
SimVideo parse_video_csv(std::string_view text, int id);

// ---- split.csv: video_id,part ----
std::string split_csv(const DatasetSplit& split);
DatasetSplit parse_split_csv(std::string_view text);

// ---- probabilities: frame,p1..pL ----
std::string probs_csv(const ProbabilityMatrix& m);
ProbabilityMatrix parse_probs_csv(std::string_view text);

// ---- labels: frame,label ----
std::string labels_csv(std::span<const Stage> s);
StageSequence parse_labels_csv(std::string_view text);

// ---- training log: phase,epoch,train_loss,validation_loss ----
std::string train_log_csv(std::span<const EpochLog> log);

// ---- network parameters ----
//
// Binary, little-endian regardless of host:
//   char[8]  "MTDLNET\0"
//   u32      format version (1)
//   u64      config hash (FNV-1a of the resolved experiment config)
//   u64      parent hash (FNV-1a of the phase-1 file bytes; 0 for phase 1)
//   u32      variant, i32 tau, i32 input_dim, i32 num_stages, i32 head_hidden
//   u32      trunk depth, then i32 per trunk hidden size
//   u32      head count, u32 layers per head
//   per layer (trunk first, then heads in offset order):
//            u32 rows, u32 cols, f64[rows*cols] weights row-major, f64[rows] bias
struct ParamsFile {
  NetParams params;
  std::uint64_t config_hash = 0;
  std::uint64_t parent_hash = 0;
};

inline constexpr std::uint32_t kParamsFormatVersion = 1;

std::string encode_params(const ParamsFile& file);
ParamsFile decode_params(std::string_view bytes);

// ---- dataset directories ----

std::string video_filename(int id);  // video_<id>.csv, id zero-padded to 3 digits
std::string probs_filename(int id);
std::string decoded_filename(int id);
std::string argmax_filename(int id);

/// Writes every video plus split.csv into `dir`.
void write_dataset(const fs::path& dir, const Dataset& data, int jobs = 1);
Dataset read_dataset(const fs::path& dir);

}  // namespace mtdl::io
