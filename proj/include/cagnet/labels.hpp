#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cagnet {

enum class Modality : std::uint8_t { Visual = 0, Audio = 1, Context = 2 };
inline constexpr std::array<Modality, 3> kModalities{Modality::Visual, Modality::Audio, Modality::Context};
inline constexpr std::size_t kNumModalities = 3;

enum class Valence : int { Positive = 0, Negative = 1, Neutral = 2 };
enum class Emotion : int { Neutral = 0, Happy = 1, Sad = 2, Fear = 3, Anger = 4 };

// Which label a model predicts. Valence and emotion models are trained separately.
enum class Task { Valence, Emotion };

inline constexpr std::size_t num_classes(Task task) { return task == Task::Valence ? 3 : 5; }

std::string_view modality_name(Modality m);
// Accepts "visual"/"audio"/"context" and the single letters v/a/c, any case.
std::optional<Modality> parse_modality(std::string_view s);

std::string_view valence_name(Valence v);
std::string_view emotion_name(Emotion e);
std::string_view task_name(Task t);
std::optional<Task> parse_task(std::string_view s);

// Case-insensitive parse of the canonical class names.
std::optional<Valence> parse_valence(std::string_view s);
std::optional<Emotion> parse_emotion(std::string_view s);

// Class name for index `label` under `task`.
std::string_view class_name(Task task, int label);
// Class index of a canonical name under `task`, case-insensitive.
std::optional<int> parse_class(Task task, std::string_view s);

std::string to_lower(std::string_view s);

}  // namespace cagnet
