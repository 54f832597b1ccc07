#include "nodefilter/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace nodefilter {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'F', 'M', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxConfigBytes = 1u << 20;
constexpr std::uint32_t kMaxNameBytes = 4096;

template <typename T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("model config: field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) {
  json j;
  j["activation"] = std::string(to_string(c.activation));
  j["basis"] = std::string(to_string(c.basis));
  j["blocks"] = c.blocks;
  j["cheb_shifted"] = c.cheb_shifted;
  j["classes"] = c.classes;
  j["dropout"] = c.dropout;
  j["ffn_hidden"] = c.ffn_hidden;
  j["heads"] = c.heads;
  j["hidden"] = c.hidden;
  j["input_dim"] = c.input_dim;
  j["mlp_factor"] = c.mlp_factor;
  j["order"] = c.order;
  j["r"] = c.r;
  j["readout_hidden"] = c.readout_hidden;
  j["seed"] = c.seed;
  return j.dump();
}

ModelConfig model_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config: expected a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "activation") c.activation = parse_activation(field<std::string>(j, k));
    else if (key == "basis") {
      try {
        c.basis = parse_basis(field<std::string>(j, k));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model config: ") + e.what());
      }
    }
    else if (key == "blocks") c.blocks = field<std::size_t>(j, k);
    else if (key == "cheb_shifted") c.cheb_shifted = field<bool>(j, k);
    else if (key == "classes") c.classes = field<std::size_t>(j, k);
    else if (key == "dropout") c.dropout = field<double>(j, k);
    else if (key == "ffn_hidden") c.ffn_hidden = field<std::size_t>(j, k);
    else if (key == "heads") c.heads = field<std::size_t>(j, k);
    else if (key == "hidden") c.hidden = field<std::size_t>(j, k);
    else if (key == "input_dim") c.input_dim = field<std::size_t>(j, k);
    else if (key == "mlp_factor") c.mlp_factor = field<std::size_t>(j, k);
    else if (key == "order") c.order = field<std::size_t>(j, k);
    else if (key == "r") c.r = field<double>(j, k);
    else if (key == "readout_hidden") c.readout_hidden = field<std::size_t>(j, k);
    else if (key == "seed") c.seed = field<std::uint64_t>(j, k);
    else throw ConfigError("model config: unknown key '" + key + "'");
    (void)value;
  }
  return c;
}

void write_checkpoint(const ModelConfig& config, ModelState& state, std::ostream& out) {
  const std::string cfg = model_config_to_json(config);
  const std::vector<ad::Parameter*> params = state.parameters();
  detail::LittleEndianWriter w(out);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u64(cfg.size());
  w.bytes(cfg.data(), cfg.size());
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const ad::Parameter* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t dim : p->value.shape()) w.u64(dim);
    for (double v : p->value.values()) w.f64(v);
  }
  if (!out) throw CheckpointFormatError("checkpoint write failed");
}

void write_checkpoint(const ModelConfig& config, ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointFormatError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(config, state, out);
}

Checkpoint read_checkpoint(std::istream& in) {
  detail::LittleEndianReader<CheckpointFormatError> r(in);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointFormatError("bad magic, not a PFM1 checkpoint");
  const auto version = r.u32("version");
  if (version != kVersion) throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version));
  const auto cfg_len = r.u64("config length");
  if (cfg_len > kMaxConfigBytes) throw CheckpointFormatError("config block too large");
  std::string cfg(cfg_len, '\0');
  r.bytes(cfg.data(), cfg.size(), "config");

  Checkpoint ck;
  try {
    ck.config = model_config_from_json(cfg);
    ck.state = ModelState::zeros(ck.config);
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(std::string("embedded config rejected: ") + e.what());
  }
  const std::vector<ad::Parameter*> params = ck.state.parameters();
  const auto count = r.u32("tensor count");
  if (count != params.size()) {
    throw CheckpointFormatError("expected " + std::to_string(params.size()) + " tensors, found " +
                                std::to_string(count));
  }
  for (ad::Parameter* p : params) {
    const auto name_len = r.u32("tensor name length");
    if (name_len > kMaxNameBytes) throw CheckpointFormatError("tensor name too long");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name.size(), "tensor name");
    if (name != p->name) throw CheckpointFormatError("expected tensor '" + p->name + "', found '" + name + "'");
    const auto ndim = r.u32("tensor rank");
    if (ndim != p->value.rank()) throw CheckpointFormatError("tensor '" + name + "' has the wrong rank");
    for (std::size_t a = 0; a < ndim; ++a) {
      if (r.u64("tensor dim") != p->value.dim(a)) throw CheckpointFormatError("tensor '" + name + "' has the wrong shape");
    }
    for (double& v : p->value.values()) v = r.f64("tensor values");
    p->zero_grad();
  }
  if (!r.at_end()) throw CheckpointFormatError("trailing bytes after the last tensor");
  return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointFormatError("cannot open '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace nodefilter
