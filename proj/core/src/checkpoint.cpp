#include "lssvc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace lssvc {

using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

json dims_json(const ModelDims& d) {
  return {{"n_mels", d.n_mels},   {"hidden", d.hidden}, {"layers", d.layers},
          {"latent", d.latent},   {"style", d.style},   {"frozen", d.frozen},
          {"classes", d.classes}, {"disc_hidden", d.disc_hidden}};
}

ModelDims dims_from(const json& j) {
  ModelDims d;
  d.n_mels = j.at("n_mels").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.layers = j.at("layers").get<std::size_t>();
  d.latent = j.at("latent").get<std::size_t>();
  d.style = j.at("style").get<std::size_t>();
  d.frozen = j.at("frozen").get<std::size_t>();
  d.classes = j.at("classes").get<std::size_t>();
  d.disc_hidden = j.at("disc_hidden").get<std::size_t>();
  return d;
}

json features_json(const FeatureConfig& f) {
  return {{"sample_rate", f.sample_rate}, {"n_fft", f.n_fft}, {"win_length", f.win_length},
          {"hop_length", f.hop_length},   {"n_mels", f.n_mels}, {"fmin", f.fmin},
          {"fmax", f.fmax},               {"log_floor", f.log_floor}};
}

FeatureConfig features_from(const json& j) {
  FeatureConfig f;
  f.sample_rate = j.at("sample_rate").get<int>();
  f.n_fft = j.at("n_fft").get<std::size_t>();
  f.win_length = j.at("win_length").get<std::size_t>();
  f.hop_length = j.at("hop_length").get<std::size_t>();
  f.n_mels = j.at("n_mels").get<std::size_t>();
  f.fmin = j.at("fmin").get<double>();
  f.fmax = j.at("fmax").get<double>();
  f.log_floor = j.at("log_floor").get<double>();
  return f;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const Model& m = ckpt.model;
  json tensors = json::array();
  std::size_t offset = 0;
  std::vector<const Tensor*> order;
  for (const ParamStore* store : {&m.gen, &m.disc}) {
    for (const auto& e : store->entries()) {
      tensors.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}});
      offset += e.value.size() * sizeof(float);
      order.push_back(&e.value);
    }
  }
  json header = {{"dims", dims_json(m.dims)},
                 {"ablation", std::string(ablation_name(m.ablation))},
                 {"text_seed", m.text_seed},
                 {"log_floor", m.log_floor},
                 {"features", features_json(ckpt.features)},
                 {"step", ckpt.step},
                 {"config", json::parse(ckpt.config_json)},
                 {"tensors", tensors}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out.reserve(out.size() + offset);
  for (const Tensor* t : order) {
    for (double v : t->values()) {
      const float f = static_cast<float>(v);
      char bytes[sizeof(float)];
      std::memcpy(bytes, &f, sizeof f);
      out.append(bytes, sizeof bytes);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  using Kind = CheckpointError::Kind;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(p, kCheckpointMagic, 8) != 0)
    throw CheckpointError(Kind::BadMagic, "bad magic in " + path.string());
  if (bytes.size() < 16) throw CheckpointError(Kind::Truncated, "truncated checkpoint header");
  const std::uint32_t version = get_u32(p + 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::VersionMismatch, "checkpoint version mismatch: file has " +
                                                     std::to_string(version) + ", reader expects " +
                                                     std::to_string(kCheckpointVersion));
  }
  const std::size_t header_len = get_u32(p + 12);
  if (16 + header_len > bytes.size()) throw CheckpointError(Kind::Truncated, "truncated checkpoint header");

  Checkpoint ck;
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    ck.model.dims = dims_from(header.at("dims"));
    ck.model.ablation = parse_ablation(header.at("ablation").get<std::string>());
    ck.model.text_seed = header.at("text_seed").get<std::uint64_t>();
    ck.model.log_floor = header.at("log_floor").get<double>();
    ck.features = features_from(header.at("features"));
    ck.step = header.at("step").get<std::int64_t>();
    ck.config_json = header.at("config").dump();
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::Malformed, std::string("malformed checkpoint header: ") + e.what());
  }

  const std::size_t payload = 16 + header_len;
  const std::size_t available = bytes.size() - payload;
  try {
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      std::size_t count = 1;
      for (std::size_t s : shape) count *= s;
      if (offset + count * sizeof(float) > available)
        throw CheckpointError(Kind::Truncated, "truncated tensor table at " + name);
      Tensor value(shape);
      for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, bytes.data() + payload + offset + i * sizeof(float), sizeof f);
        value[i] = static_cast<double>(f);
      }
      (name.starts_with("disc.") ? ck.model.disc : ck.model.gen).add(name, std::move(value));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::Malformed, std::string("malformed tensor table: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CheckpointError(Kind::Malformed, std::string("malformed tensor table: ") + e.what());
  }
  return ck;
}

}  // namespace lssvc
