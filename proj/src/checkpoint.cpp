#include "cagnet/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "cagnet/error.hpp"

namespace cagnet {

using json = nlohmann::json;

json model_config_to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},
              {"attention_heads", c.attention_heads},
              {"ff_dim", c.ff_dim},
              {"dropout_p", c.dropout_p},
              {"num_classes", c.num_classes},
              {"se_reduction", c.se_reduction},
              {"variant", std::string(variant_name(c.variant))}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.d_model = j.at("d_model").get<std::size_t>();
    c.attention_heads = j.at("attention_heads").get<std::size_t>();
    c.ff_dim = j.at("ff_dim").get<std::size_t>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.se_reduction = j.at("se_reduction").get<std::size_t>();
    const auto name = j.at("variant").get<std::string>();
    auto v = parse_variant(name);
    if (!v) throw FormatError("unknown model variant '" + name + "'");
    c.variant = *v;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const ModelParams<float>& params, const ModelConfig& config, Task task,
                     const std::filesystem::path& path) {
  validate_params(params, config);
  json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = model_config_to_json(config);
  header["task"] = std::string(task_name(task));
  json tensors = json::array();
  for (const auto& [name, t] : params) tensors.push_back(json{{"path", name}, {"shape", t.shape()}});
  header["tensors"] = tensors;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  std::vector<char> buf;
  for (const auto& [name, t] : params) {
    buf.resize(t.size() * 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(t[i]);
      for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw Error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty checkpoint");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": checkpoint header is not valid JSON: " + e.what());
  }
  const int version = header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version) +
                      " (supported: " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(header.at("config"));
  const auto task = parse_task(header.value("task", ""));
  if (!task) throw FormatError(path.string() + ": checkpoint names no valid task");
  ckpt.task = *task;
  if (num_classes(ckpt.task) != ckpt.config.num_classes) {
    throw FormatError(path.string() + ": task and num_classes disagree");
  }

  const auto expected = param_shapes(ckpt.config);
  std::vector<char> buf;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("path").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    auto it = expected.find(name);
    if (it == expected.end()) throw FormatError(path.string() + ": unexpected tensor " + name);
    if (it->second != shape) {
      throw FormatError(path.string() + ": tensor " + name + " has shape " + shape_str(shape) +
                        " in the header but the config requires " + shape_str(it->second));
    }
    const std::size_t n = shape_numel(shape);
    buf.resize(n * 4);
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
      throw FormatError(path.string() + ": payload truncated in tensor " + name);
    }
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[4 * i + b])) << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
    ckpt.params.emplace(name, Tensor<float>(shape, std::move(data)));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after payload");
  try {
    validate_params(ckpt.params, ckpt.config);
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace cagnet
