#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msnet/datagen.hpp"
#include "msnet/lattice.hpp"
#include "msnet/simcore.hpp"
#include "msnet/train.hpp"

namespace msnet {

// ---- rollout container ("MSNR") -------------------------------------------
//
// magic "MSNR" | version u16 | flags u16 (bit 0: velocity block present)
// metadata: u32 byte length + UTF-8 JSON
// payload: frame count u32, point count u32,
//          positions as little-endian f64, frame-major, point-major, xyz
//          optional velocity block with the same layout
//
// All integers little-endian. Writing the result of a read reproduces the
// file byte for byte.

void write_rollout_file(const std::string& path, const SourceRollout& rollout);
SourceRollout read_rollout_file(const std::string& path);

// ---- model file (JSON with base64 f64 arrays) ------------------------------

struct ModelFile {
  GridSpec grid;
  TopologyFlags topology;
  SpringNetwork net;
  MaterialParams params;
  // provenance
  std::string curriculum;  // "dual" | "single"
  std::string config_hash;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;
  double final_loss = 0.0;
  std::string source_kind;
};

void write_model_file(const std::string& path, const ModelFile& model);
ModelFile read_model_file(const std::string& path);

// ---- clip set file ----------------------------------------------------------

struct ClipSetFile {
  ClipSet clips;
  std::vector<std::string> rollout_files;  // relative to the clip set file
  std::string manifest_sha256;
};

void write_clipset_file(const std::string& path, const ClipSetFile& file);
ClipSetFile read_clipset_file(const std::string& path);

// ---- rollout manifest -------------------------------------------------------

struct ManifestEntry {
  std::string name;  // file name relative to the manifest
  std::string sha256;
  std::uint32_t frames = 0;
  std::uint32_t landmarks = 0;
};

struct Manifest {
  std::vector<ManifestEntry> files;
  std::string engine;  // "mass-spring" | "fem"
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string truth_model;  // optional file name
};

void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

/// Checks each listed file's SHA-256; throws DataError on the first
/// mismatch. Returns the verified absolute paths.
std::vector<std::string> verify_manifest(const std::string& manifest_path);

// ---- trainer checkpoint -----------------------------------------------------

void write_checkpoint_file(const std::string& path, const TrainerState& state,
                           const std::string& config_hash);
TrainerState read_checkpoint_file(const std::string& path, std::string* config_hash = nullptr);

// ---- training log -----------------------------------------------------------

/// One line-delimited JSON record.
std::string iteration_record_json(const IterationRecord& record);

// ---- hashing & encoding -----------------------------------------------------

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace msnet
