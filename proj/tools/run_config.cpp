#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>

#include "cagnet/error.hpp"

namespace cagnet::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ValidationError("config key '" + key + "': invalid number '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const auto v = to_lower(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    auto item = trim(value.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value,
                                  const std::filesystem::path& base)>;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"manifest", [](RunConfig& c, auto&, auto& v, auto& b) { c.manifest = resolve(b, v); }},
      {"splits", [](RunConfig& c, auto&, auto& v, auto& b) { c.splits = resolve(b, v); }},
      {"out_dir", [](RunConfig& c, auto&, auto& v, auto& b) { c.out_dir = resolve(b, v); }},
      {"train_splits", [](RunConfig& c, auto&, auto& v, auto&) { c.train_splits = split_list(v); }},
      {"val_split", [](RunConfig& c, auto&, auto& v, auto&) { c.val_split = v; }},
      {"log_timing", [](RunConfig& c, auto& k, auto& v, auto&) { c.log_timing = parse_bool(k, v); }},
      {"task",
       [](RunConfig& c, auto& k, auto& v, auto&) {
         auto t = parse_task(v);
         if (!t) throw ValidationError("config key '" + k + "': expected valence or emotion, got '" + v + "'");
         c.train.task = *t;
         c.model.num_classes = num_classes(*t);
       }},
      {"variant",
       [](RunConfig& c, auto& k, auto& v, auto&) {
         auto var = parse_variant(v);
         if (!var) {
           throw ValidationError("config key '" + k + "': expected cagnet, merged or hierarchical, got '" + v + "'");
         }
         c.model.variant = *var;
       }},
      {"d_model", [](RunConfig& c, auto& k, auto& v, auto&) { c.model.d_model = parse_number<std::size_t>(k, v); }},
      {"heads",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.model.attention_heads = parse_number<std::size_t>(k, v); }},
      {"ff_dim", [](RunConfig& c, auto& k, auto& v, auto&) { c.model.ff_dim = parse_number<std::size_t>(k, v); }},
      {"dropout", [](RunConfig& c, auto& k, auto& v, auto&) { c.model.dropout_p = parse_number<double>(k, v); }},
      {"se_reduction",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.model.se_reduction = parse_number<std::size_t>(k, v); }},
      {"batch_size",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.train.batch_size = parse_number<std::size_t>(k, v); }},
      {"max_epochs",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.train.max_epochs = parse_number<std::size_t>(k, v); }},
      {"patience", [](RunConfig& c, auto& k, auto& v, auto&) { c.train.patience = parse_number<std::size_t>(k, v); }},
      {"fixed_epochs",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.train.fixed_epochs = parse_number<std::size_t>(k, v); }},
      {"lr", [](RunConfig& c, auto& k, auto& v, auto&) { c.train.lr = parse_number<double>(k, v); }},
      {"weight_decay", [](RunConfig& c, auto& k, auto& v, auto&) { c.train.weight_decay = parse_number<double>(k, v); }},
      {"modality_dropout",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.train.modality_dropout_p = parse_number<double>(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v, auto&) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"visual_steps",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.train.caps.max_steps[0] = parse_number<std::size_t>(k, v); }},
      {"audio_steps",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.train.caps.max_steps[1] = parse_number<std::size_t>(k, v); }},
      {"context_steps",
       [](RunConfig& c, auto& k, auto& v, auto&) { c.train.caps.max_steps[2] = parse_number<std::size_t>(k, v); }},
  };
  return table;
}

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    const auto body = trim(text);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    const auto key = trim(body.substr(0, eq));
    const auto value = trim(body.substr(eq + 1));
    if (key.empty()) throw ParseError(line, "empty key");
    if (!kv.emplace(key, value).second) throw ParseError(line, "key '" + key + "' appears twice");
  }
  return kv;
}

void apply_key_values(RunConfig& config, const KeyValues& kv, const std::filesystem::path& base_dir) {
  const auto& table = setters();
  for (const auto& [key, value] : kv) {
    auto it = table.find(key);
    if (it == table.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second(config, key, value, base_dir);
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  const auto kv = parse_key_values(in);
  RunConfig config;
  apply_key_values(config, kv, path.parent_path());
  return config;
}

void validate_run_config(const RunConfig& config) {
  config.model.validate();
  config.train.validate();
  if (config.model.num_classes != num_classes(config.train.task)) {
    throw ValidationError("num_classes does not match the task");
  }
  if (config.manifest.empty()) throw ValidationError("config: 'manifest' is required");
  if (!std::filesystem::exists(config.manifest)) {
    throw ValidationError("config: manifest " + config.manifest.string() + " does not exist");
  }
  if (!config.splits.empty() && !std::filesystem::exists(config.splits)) {
    throw ValidationError("config: splits file " + config.splits.string() + " does not exist");
  }
  if (config.splits.empty() && config.train.fixed_epochs == 0) {
    throw ValidationError("config: without a splits file set fixed_epochs (no validation set for early stopping)");
  }
  if (config.train_splits.empty()) throw ValidationError("config: train_splits is empty");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace cagnet::cli
