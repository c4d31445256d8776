#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cagnet/labels.hpp"

namespace cagnet {

// One modality of one clip: T time steps of D float32 features plus a
// validity flag per step.
struct EmbeddingSequence {
  Modality modality = Modality::Visual;
  std::uint32_t length = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;  // length × dim, row-major
  std::vector<bool> valid;    // length

  std::size_t valid_count() const;
  // Throws ValidationError when sizes disagree or no step is valid.
  void validate() const;

  // Bitwise equality (NaN payloads included).
  bool bit_equal(const EmbeddingSequence& other) const;
};

// Binary layout, little-endian:
//   "GVED" | u16 version = 1 | u8 modality | u32 T | u32 D
//   | ceil(T/8) bytes validity bitmap, bit t of byte t/8 (LSB first)
//   | T·D float32 values, row-major
inline constexpr std::array<char, 4> kEmbeddingMagic{'G', 'V', 'E', 'D'};
inline constexpr std::uint16_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 2 + 1 + 4 + 4;

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq);
// `expected_dim`, when given, must match the declared D.
EmbeddingSequence decode_embedding(const std::vector<std::uint8_t>& bytes,
                                   std::optional<std::uint32_t> expected_dim = std::nullopt);

void write_embedding_file(const EmbeddingSequence& seq, const std::filesystem::path& path);
EmbeddingSequence read_embedding_file(const std::filesystem::path& path,
                                      std::optional<std::uint32_t> expected_dim = std::nullopt);

struct ClipSample {
  std::string clip_id;
  std::string source_video_id;
  // File per modality; nullopt marks the modality as missing.
  std::array<std::optional<std::filesystem::path>, kNumModalities> paths;
  std::array<std::optional<EmbeddingSequence>, kNumModalities> embeddings;
  std::optional<Valence> valence;
  std::optional<Emotion> emotion;
  std::optional<std::string> intensity;
  std::optional<std::string> interaction;
  std::vector<std::string> cues;

  bool has(Modality m) const { return paths[static_cast<std::size_t>(m)].has_value(); }
  // Class index for `task`, or -1 when unlabeled.
  int label(Task task) const;
};

// JSONL manifest, one clip per line. Relative embedding paths resolve against
// `base_dir`. Labels are matched case-insensitively. Errors carry the line.
std::vector<ClipSample> parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {});
std::vector<ClipSample> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ClipSample>& samples, const std::filesystem::path& path);

// Reads every referenced embedding file into the samples.
void load_embeddings(std::vector<ClipSample>& samples, std::optional<std::uint32_t> expected_dim = std::nullopt);

// Maximum steps kept per modality; 0 means no cap. Over-long sequences keep
// their first steps.
struct SequenceCaps {
  std::array<std::size_t, kNumModalities> max_steps{10, 0, 0};
};

struct ModalityBatch {
  std::size_t steps = 0;  // padded length T_max
  std::size_t dim = 0;    // feature width, 0 when missing for the whole batch
  std::vector<float> values;       // batch × steps × dim, zero where invalid
  std::vector<bool> valid;         // batch × steps
  std::vector<bool> missing;       // batch

  bool is_missing(std::size_t b) const { return missing[b]; }
  std::vector<bool> mask(std::size_t b) const;
};

struct BatchTensors {
  std::size_t size = 0;
  std::array<ModalityBatch, kNumModalities> streams;
  std::vector<int> labels;  // -1 where unlabeled
  std::vector<std::string> clip_ids;

  ModalityBatch& stream(Modality m) { return streams[static_cast<std::size_t>(m)]; }
  const ModalityBatch& stream(Modality m) const { return streams[static_cast<std::size_t>(m)]; }

  // Zeroes one modality of one sample and flags it missing.
  void drop_modality(std::size_t b, Modality m);
};

// Pads (or truncates) every modality to the longest sequence in the batch.
// Samples must have their embeddings loaded for every present modality.
BatchTensors make_batch(const std::vector<const ClipSample*>& samples, const SequenceCaps& caps, Task task);
BatchTensors make_batch(const std::vector<ClipSample>& samples, const SequenceCaps& caps, Task task);

}  // namespace cagnet
