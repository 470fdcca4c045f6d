#include "cgmvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "cgmvae/errors.hpp"
#include "json_io.hpp"

namespace cgmvae {

namespace {

constexpr const char* kMagic = "cgmvae-checkpoint";

void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot rename " + tmp.string() + " to " + path.string());
  }
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const ModelParams& params) {
  using detail::json;
  json shapes = json::array();
  for (const auto& p : params.parameters()) shapes.push_back({{"name", p.name}, {"shape", p.shape}});
  const json header{{"format", kMagic},
                    {"format_version", meta.format_version},
                    {"dtype", "float32-le"},
                    {"seed", meta.seed},
                    {"epoch", meta.epoch},
                    {"tag", meta.tag},
                    {"model", detail::to_json(params.config())},
                    {"data", detail::to_json(meta.data)},
                    {"parameters", shapes}};
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + 4 * params.total_size());
  for (const auto& p : params.parameters())
    for (double v : p.value) put_f32(out, v);
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw CheckpointError(path.string() + ": missing metadata line");

  detail::json header;
  try {
    header = detail::json::parse(bytes.substr(0, nl));
  } catch (const detail::json::exception& e) {
    throw CheckpointError(path.string() + ": bad metadata: " + e.what());
  }
  if (header.value("format", std::string()) != kMagic) throw CheckpointError(path.string() + ": not a checkpoint");
  const int version = header.value("format_version", 0);
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError(path.string() + ": unsupported format version " + std::to_string(version));
  }

  Checkpoint ck;
  try {
    ck.meta.format_version = version;
    ck.meta.seed = header.at("seed").get<std::uint64_t>();
    ck.meta.epoch = header.at("epoch").get<std::size_t>();
    ck.meta.tag = header.at("tag").get<std::string>();
    ck.meta.data = detail::data_provenance_from_json(header.at("data"));
    ck.params = ModelParams(detail::model_config_from_json(header.at("model")));
  } catch (const detail::json::exception& e) {
    throw CheckpointError(path.string() + ": bad metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": bad model config: " + e.what());
  }

  const auto& listed = header.at("parameters");
  auto& params = ck.params.parameters();
  if (!listed.is_array() || listed.size() != params.size()) {
    throw CheckpointError(path.string() + ": parameter list does not match the model config");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (listed[i].value("name", std::string()) != params[i].name ||
        listed[i].value("shape", ad::Shape()) != params[i].shape) {
      throw CheckpointError(path.string() + ": parameter " + std::to_string(i) + " should be " + params[i].name +
                            " " + ad::shape_string(params[i].shape));
    }
  }
  const std::size_t expected = nl + 1 + 4 * ck.params.total_size();
  if (bytes.size() != expected) {
    throw CheckpointError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()));
  }
  const char* p = bytes.data() + nl + 1;
  for (auto& param : params)
    for (double& v : param.value) {
      v = static_cast<double>(get_f32(p));
      p += 4;
    }
  return ck;
}

ModelParams round_to_checkpoint_precision(const ModelParams& params) {
  ModelParams out = params;
  for (auto& p : out.parameters())
    for (double& v : p.value) v = static_cast<double>(static_cast<float>(v));
  return out;
}

void require_compatible(const ModelConfig& config, const Dataset& ds) {
  if (config.input_dim != ds.feature_dim() || config.num_labels != ds.num_labels()) {
    throw CheckpointError("checkpoint expects D=" + std::to_string(config.input_dim) +
                          " L=" + std::to_string(config.num_labels) + " but the dataset has D=" +
                          std::to_string(ds.feature_dim()) + " L=" + std::to_string(ds.num_labels()));
  }
}

}  // namespace cgmvae
