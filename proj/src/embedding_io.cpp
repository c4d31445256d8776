#include "cagnet/embedding_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "cagnet/error.hpp"

namespace cagnet {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 3> kModalityNames{"visual", "audio", "context"};
constexpr std::array<std::string_view, 3> kValenceNames{"Positive", "Negative", "Neutral"};
constexpr std::array<std::string_view, 5> kEmotionNames{"Neutral", "Happy", "Sad", "Fear", "Anger"};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return v;
}

std::size_t bitmap_bytes(std::size_t steps) { return (steps + 7) / 8; }

}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view modality_name(Modality m) { return kModalityNames.at(static_cast<std::size_t>(m)); }

std::optional<Modality> parse_modality(std::string_view s) {
  const std::string l = to_lower(s);
  for (std::size_t i = 0; i < kModalityNames.size(); ++i) {
    if (l == kModalityNames[i] || (l.size() == 1 && l[0] == kModalityNames[i][0])) {
      return static_cast<Modality>(i);
    }
  }
  return std::nullopt;
}

std::string_view valence_name(Valence v) { return kValenceNames.at(static_cast<std::size_t>(v)); }
std::string_view emotion_name(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }
std::string_view task_name(Task t) { return t == Task::Valence ? "valence" : "emotion"; }

std::optional<Task> parse_task(std::string_view s) {
  const std::string l = to_lower(s);
  if (l == "valence") return Task::Valence;
  if (l == "emotion") return Task::Emotion;
  return std::nullopt;
}

std::optional<Valence> parse_valence(std::string_view s) {
  const std::string l = to_lower(s);
  for (std::size_t i = 0; i < kValenceNames.size(); ++i)
    if (l == to_lower(kValenceNames[i])) return static_cast<Valence>(i);
  return std::nullopt;
}

std::optional<Emotion> parse_emotion(std::string_view s) {
  const std::string l = to_lower(s);
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i)
    if (l == to_lower(kEmotionNames[i])) return static_cast<Emotion>(i);
  return std::nullopt;
}

std::string_view class_name(Task task, int label) {
  return task == Task::Valence ? valence_name(static_cast<Valence>(label))
                               : emotion_name(static_cast<Emotion>(label));
}

std::optional<int> parse_class(Task task, std::string_view s) {
  if (task == Task::Valence) {
    if (auto v = parse_valence(s)) return static_cast<int>(*v);
  } else if (auto e = parse_emotion(s)) {
    return static_cast<int>(*e);
  }
  return std::nullopt;
}

// ---- EmbeddingSequence ----------------------------------------------------

std::size_t EmbeddingSequence::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

void EmbeddingSequence::validate() const {
  if (length == 0) throw ValidationError("embedding sequence has zero length");
  if (dim == 0) throw ValidationError("embedding sequence has zero feature width");
  if (valid.size() != length) {
    throw ValidationError("validity mask has " + std::to_string(valid.size()) + " entries for length " +
                          std::to_string(length));
  }
  if (values.size() != static_cast<std::size_t>(length) * dim) {
    throw ValidationError("embedding payload has " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(static_cast<std::size_t>(length) * dim));
  }
  if (valid_count() == 0) throw ValidationError("embedding sequence has no valid steps");
}

bool EmbeddingSequence::bit_equal(const EmbeddingSequence& o) const {
  return modality == o.modality && length == o.length && dim == o.dim && valid == o.valid &&
         values.size() == o.values.size() &&
         std::memcmp(values.data(), o.values.data(), values.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_embedding(const EmbeddingSequence& seq) {
  seq.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderBytes + bitmap_bytes(seq.length) + seq.values.size() * 4);
  out.insert(out.end(), kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  put_le<std::uint16_t>(out, kEmbeddingVersion);
  out.push_back(static_cast<std::uint8_t>(seq.modality));
  put_le<std::uint32_t>(out, seq.length);
  put_le<std::uint32_t>(out, seq.dim);
  std::vector<std::uint8_t> bitmap(bitmap_bytes(seq.length), 0);
  for (std::size_t t = 0; t < seq.length; ++t)
    if (seq.valid[t]) bitmap[t / 8] |= static_cast<std::uint8_t>(1u << (t % 8));
  out.insert(out.end(), bitmap.begin(), bitmap.end());
  for (float v : seq.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

EmbeddingSequence decode_embedding(const std::vector<std::uint8_t>& bytes,
                                   std::optional<std::uint32_t> expected_dim) {
  if (bytes.size() < kEmbeddingHeaderBytes) {
    throw FormatError("embedding file truncated in header: expected at least " +
                      std::to_string(kEmbeddingHeaderBytes) + " bytes, got " + std::to_string(bytes.size()));
  }
  if (!std::equal(kEmbeddingMagic.begin(), kEmbeddingMagic.end(), bytes.begin())) {
    throw FormatError("bad magic: expected \"GVED\"");
  }
  const auto version = get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kEmbeddingVersion) {
    throw FormatError("unsupported embedding format version " + std::to_string(version) + " (supported: 1)");
  }
  const std::uint8_t mod = bytes[6];
  if (mod > 2) throw FormatError("unknown modality code " + std::to_string(mod));

  EmbeddingSequence seq;
  seq.modality = static_cast<Modality>(mod);
  seq.length = get_le<std::uint32_t>(bytes.data() + 7);
  seq.dim = get_le<std::uint32_t>(bytes.data() + 11);
  if (seq.length == 0 || seq.dim == 0) throw FormatError("embedding file declares an empty sequence");
  if (expected_dim && seq.dim != *expected_dim) {
    throw FormatError("feature width mismatch: file declares D=" + std::to_string(seq.dim) + ", expected D=" +
                      std::to_string(*expected_dim));
  }
  const std::size_t mask_bytes = bitmap_bytes(seq.length);
  const std::size_t expected =
      kEmbeddingHeaderBytes + mask_bytes + static_cast<std::size_t>(seq.length) * seq.dim * 4;
  if (bytes.size() < expected) {
    throw FormatError("embedding file truncated: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError("embedding file has " + std::to_string(bytes.size() - expected) + " trailing bytes");
  }
  const std::uint8_t* bitmap = bytes.data() + kEmbeddingHeaderBytes;
  seq.valid.resize(seq.length);
  for (std::size_t t = 0; t < seq.length; ++t) seq.valid[t] = (bitmap[t / 8] >> (t % 8)) & 1u;
  if (seq.length % 8 != 0 && (bitmap[mask_bytes - 1] >> (seq.length % 8)) != 0) {
    throw FormatError("validity bitmap has bits set beyond the sequence length");
  }
  const std::uint8_t* payload = bitmap + mask_bytes;
  seq.values.resize(static_cast<std::size_t>(seq.length) * seq.dim);
  for (std::size_t i = 0; i < seq.values.size(); ++i) {
    seq.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload + 4 * i));
  }
  if (seq.valid_count() == 0) throw FormatError("embedding file has no valid steps");
  return seq;
}

void write_embedding_file(const EmbeddingSequence& seq, const std::filesystem::path& path) {
  const auto bytes = encode_embedding(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

EmbeddingSequence read_embedding_file(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embedding file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_embedding(bytes, expected_dim);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- Manifest -------------------------------------------------------------

int ClipSample::label(Task task) const {
  if (task == Task::Valence) return valence ? static_cast<int>(*valence) : -1;
  return emotion ? static_cast<int>(*emotion) : -1;
}

namespace {

std::optional<std::string> optional_string(const json& row, const char* key, std::size_t line) {
  auto it = row.find(key);
  if (it == row.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::string required_string(const json& row, const char* key, std::size_t line) {
  auto v = optional_string(row, key, line);
  if (!v || v->empty()) throw ParseError(line, std::string("missing required field '") + key + "'");
  return *v;
}

}  // namespace

std::vector<ClipSample> parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
  std::vector<ClipSample> samples;
  std::set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!row.is_object()) throw ParseError(line, "expected a JSON object");

    ClipSample s;
    s.clip_id = required_string(row, "clip_id", line);
    s.source_video_id = required_string(row, "source_video_id", line);
    if (!seen.insert(s.clip_id).second) throw ParseError(line, "duplicate clip_id '" + s.clip_id + "'");

    auto paths = row.find("paths");
    if (paths == row.end() || !paths->is_object()) throw ParseError(line, "missing required field 'paths'");
    for (auto m : kModalities) {
      const std::string key(modality_name(m));
      auto p = paths->find(key);
      if (p == paths->end() || p->is_null()) continue;
      if (!p->is_string()) throw ParseError(line, "paths." + key + " must be a string or null");
      std::filesystem::path fp = p->get<std::string>();
      if (fp.is_relative() && !base_dir.empty()) fp = base_dir / fp;
      s.paths[static_cast<std::size_t>(m)] = fp;
    }
    if (std::none_of(s.paths.begin(), s.paths.end(), [](const auto& p) { return p.has_value(); })) {
      throw ParseError(line, "clip '" + s.clip_id + "' has no modality present");
    }

    if (auto v = optional_string(row, "valence", line)) {
      s.valence = parse_valence(*v);
      if (!s.valence) throw ParseError(line, "unknown valence label '" + *v + "'");
    }
    if (auto e = optional_string(row, "emotion", line)) {
      s.emotion = parse_emotion(*e);
      if (!s.emotion) throw ParseError(line, "unknown emotion label '" + *e + "'");
    }
    s.intensity = optional_string(row, "intensity", line);
    s.interaction = optional_string(row, "interaction", line);
    if (auto c = row.find("cues"); c != row.end() && !c->is_null()) {
      if (!c->is_array()) throw ParseError(line, "field 'cues' must be an array of strings");
      for (const auto& cue : *c) {
        if (!cue.is_string()) throw ParseError(line, "field 'cues' must be an array of strings");
        s.cues.push_back(cue.get<std::string>());
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<ClipSample> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

void write_manifest(const std::vector<ClipSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const auto base = path.parent_path();
  for (const auto& s : samples) {
    json row;
    row["clip_id"] = s.clip_id;
    row["source_video_id"] = s.source_video_id;
    json paths = json::object();
    for (auto m : kModalities) {
      const auto& p = s.paths[static_cast<std::size_t>(m)];
      if (!p) {
        paths[std::string(modality_name(m))] = nullptr;
        continue;
      }
      std::error_code ec;
      auto rel = base.empty() ? *p : std::filesystem::relative(*p, base, ec);
      paths[std::string(modality_name(m))] = (ec || rel.empty() ? *p : rel).generic_string();
    }
    row["paths"] = paths;
    row["valence"] = s.valence ? json(valence_name(*s.valence)) : json(nullptr);
    row["emotion"] = s.emotion ? json(emotion_name(*s.emotion)) : json(nullptr);
    if (s.intensity) row["intensity"] = *s.intensity;
    if (s.interaction) row["interaction"] = *s.interaction;
    if (!s.cues.empty()) row["cues"] = s.cues;
    out << row.dump() << '\n';
  }
}

void load_embeddings(std::vector<ClipSample>& samples, std::optional<std::uint32_t> expected_dim) {
  for (auto& s : samples) {
    for (auto m : kModalities) {
      const auto i = static_cast<std::size_t>(m);
      if (!s.paths[i] || s.embeddings[i]) continue;
      auto seq = read_embedding_file(*s.paths[i], expected_dim);
      if (seq.modality != m) {
        throw FormatError(s.paths[i]->string() + ": file holds " + std::string(modality_name(seq.modality)) +
                          " features but is listed as " + std::string(modality_name(m)));
      }
      s.embeddings[i] = std::move(seq);
    }
  }
}

// ---- Batching -------------------------------------------------------------

std::vector<bool> ModalityBatch::mask(std::size_t b) const {
  return std::vector<bool>(valid.begin() + static_cast<std::ptrdiff_t>(b * steps),
                           valid.begin() + static_cast<std::ptrdiff_t>((b + 1) * steps));
}

void BatchTensors::drop_modality(std::size_t b, Modality m) {
  auto& s = stream(m);
  s.missing[b] = true;
  std::fill_n(s.values.begin() + static_cast<std::ptrdiff_t>(b * s.steps * s.dim), s.steps * s.dim, 0.0f);
  std::fill_n(s.valid.begin() + static_cast<std::ptrdiff_t>(b * s.steps), s.steps, false);
}

BatchTensors make_batch(const std::vector<const ClipSample*>& samples, const SequenceCaps& caps, Task task) {
  if (samples.empty()) throw ValidationError("make_batch: empty sample list");
  BatchTensors batch;
  batch.size = samples.size();
  for (const auto* s : samples) {
    batch.labels.push_back(s->label(task));
    batch.clip_ids.push_back(s->clip_id);
  }
  for (auto m : kModalities) {
    const auto mi = static_cast<std::size_t>(m);
    const std::size_t cap = caps.max_steps[mi];
    auto& out = batch.streams[mi];
    out.missing.assign(batch.size, true);
    for (std::size_t b = 0; b < batch.size; ++b) {
      const auto* s = samples[b];
      if (!s->paths[mi]) continue;
      if (!s->embeddings[mi]) {
        throw ValidationError("make_batch: " + std::string(modality_name(m)) + " embedding of clip '" +
                              s->clip_id + "' is not loaded");
      }
      const auto& seq = *s->embeddings[mi];
      if (out.dim != 0 && out.dim != seq.dim) {
        throw DimensionError("make_batch: inconsistent " + std::string(modality_name(m)) + " width " +
                             std::to_string(seq.dim) + " in clip '" + s->clip_id + "', batch uses " +
                             std::to_string(out.dim));
      }
      out.dim = seq.dim;
      out.missing[b] = false;
      const std::size_t kept = cap ? std::min<std::size_t>(cap, seq.length) : seq.length;
      out.steps = std::max(out.steps, kept);
    }
    out.values.assign(batch.size * out.steps * out.dim, 0.0f);
    out.valid.assign(batch.size * out.steps, false);
    for (std::size_t b = 0; b < batch.size; ++b) {
      if (out.missing[b]) continue;
      const auto& seq = *samples[b]->embeddings[mi];
      const std::size_t kept = cap ? std::min<std::size_t>(cap, seq.length) : seq.length;
      std::size_t valid_kept = 0;
      for (std::size_t t = 0; t < kept; ++t) {
        if (!seq.valid[t]) continue;
        ++valid_kept;
        out.valid[b * out.steps + t] = true;
        std::copy_n(seq.values.begin() + static_cast<std::ptrdiff_t>(t * out.dim), out.dim,
                    out.values.begin() + static_cast<std::ptrdiff_t>((b * out.steps + t) * out.dim));
      }
      if (valid_kept == 0) {
        throw ValidationError("make_batch: " + std::string(modality_name(m)) + " stream of clip '" +
                              samples[b]->clip_id + "' has no valid steps within the first " +
                              std::to_string(kept));
      }
    }
  }
  return batch;
}

BatchTensors make_batch(const std::vector<ClipSample>& samples, const SequenceCaps& caps, Task task) {
  std::vector<const ClipSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs, caps, task);
}

}  // namespace cagnet
