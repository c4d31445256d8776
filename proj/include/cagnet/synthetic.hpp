#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cagnet/embedding_io.hpp"

// Synthetic trimodal clips for tests, demos and the quickstart config. Each
// class owns a prototype vector per modality; every valid time step is its
// class prototype plus Gaussian noise, so mean-pooled features are linearly
// separable when the noise is small.
namespace cagnet {

struct SyntheticOptions {
  std::size_t clips = 64;
  std::uint32_t dim = 16;
  Task task = Task::Valence;  // which label the features encode
  std::array<std::uint32_t, kNumModalities> steps{10, 6, 4};
  double signal = 1.0;  // prototype norm
  double noise = 0.3;   // per-coordinate standard deviation
  // Audio and context carry noise only; labels depend on the visual stream.
  bool visual_only = false;
  // Random valid length per sequence in [ceil(T/2), T]; trailing steps are
  // invalid and filled with NaN.
  bool ragged = false;
  std::size_t clips_per_video = 2;
  std::uint64_t seed = 7;
};

// Balanced labels (clip i gets class i mod C for the encoded task; the other
// task's label is set the same way). Embeddings are held in memory and paths
// are placeholder file names relative to the output directory.
std::vector<ClipSample> make_synthetic(const SyntheticOptions& options);

// Writes one GVED file per present modality plus manifest.jsonl into `dir`,
// rewriting sample paths to the written files. Returns the manifest path.
std::filesystem::path write_synthetic(std::vector<ClipSample>& samples, const std::filesystem::path& dir);

}  // namespace cagnet
