#include "pulsar/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pulsar/errors.hpp"

namespace pulsar {

using nlohmann::json;

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;  // without the NUL

void write_u64_le(std::ofstream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64_le(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw DataError("checkpoint: truncated header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

template <class T>
void write_scalar_le(std::ofstream& out, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits;
  std::memcpy(&bits, &v, sizeof(T));
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_scalar_le(std::ifstream& in) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated payload");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace

const CheckpointEntry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw DataError("checkpoint: missing entry '" + name + "'");
}

json risk_breakdown_to_json(const RiskBreakdown& r) {
  return json{{"total", r.total},
              {"positive_term", r.positive_term},
              {"unlabeled_or_negative_term", r.unlabeled_or_negative_term},
              {"clamped", r.clamped}};
}

RiskBreakdown risk_breakdown_from_json(const json& j) {
  RiskBreakdown r;
  r.total = j.at("total").get<double>();
  r.positive_term = j.at("positive_term").get<double>();
  r.unlabeled_or_negative_term = j.at("unlabeled_or_negative_term").get<double>();
  r.clamped = j.at("clamped").get<bool>();
  return r;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (ckpt.dtype != "f32" && ckpt.dtype != "f64") throw ConfigError("checkpoint: dtype must be f32 or f64");
  const std::size_t width = ckpt.dtype == "f32" ? 4 : 8;

  json header;
  header["format"] = kCheckpointMagic;
  header["dtype"] = ckpt.dtype;
  header["model_config"] = ckpt.model_config;
  header["train_config"] = ckpt.train_config;
  header["stream"] = ckpt.stream;
  header["best_epoch"] = ckpt.best_epoch;
  header["best_val_accuracy"] = ckpt.best_val_accuracy;
  json hist = json::array();
  for (const auto& e : ckpt.history)
    hist.push_back(json{{"epoch", e.epoch},
                        {"steps", e.steps},
                        {"train_risk", risk_breakdown_to_json(e.train_risk)},
                        {"val_accuracy", e.val_accuracy},
                        {"lr", e.lr}});
  header["history"] = std::move(hist);
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& e : ckpt.entries) {
    entries.push_back(json{{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"kind", e.is_stat ? "stat" : "param"}});
    offset += e.values.size() * width;
  }
  header["entries"] = std::move(entries);

  const std::string header_bytes = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, static_cast<std::streamsize>(kMagicLen));
  out.put('\n');
  write_u64_le(out, header_bytes.size());
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& e : ckpt.entries)
    for (double v : e.values) {
      if (width == 4)
        write_scalar_le(out, static_cast<float>(v));
      else
        write_scalar_le(out, v);
    }
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[kMagicLen + 1] = {};
  in.read(magic, static_cast<std::streamsize>(kMagicLen));
  char newline = 0;
  in.get(newline);
  if (!in || std::string(magic, kMagicLen) != kCheckpointMagic || newline != '\n')
    throw DataError("checkpoint: bad magic in " + path + " (expected " + kCheckpointMagic + ")");
  const std::uint64_t header_size = read_u64_le(in);
  std::string header_bytes(header_size, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw DataError("checkpoint: truncated header in " + path);

  json header;
  try {
    header = json::parse(header_bytes);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: invalid header JSON: ") + e.what());
  }
  if (header.at("format").get<std::string>() != kCheckpointMagic)
    throw DataError("checkpoint: unsupported format tag (expected " + std::string(kCheckpointMagic) + ")");

  Checkpoint ckpt;
  ckpt.dtype = header.at("dtype").get<std::string>();
  if (ckpt.dtype != "f32" && ckpt.dtype != "f64") throw DataError("checkpoint: unknown dtype " + ckpt.dtype);
  const std::size_t width = ckpt.dtype == "f32" ? 4 : 8;
  ckpt.model_config = header.at("model_config");
  ckpt.train_config = header.at("train_config");
  ckpt.stream = header.at("stream").get<std::string>();
  ckpt.best_epoch = header.at("best_epoch").get<int>();
  ckpt.best_val_accuracy = header.at("best_val_accuracy").get<double>();
  for (const auto& e : header.at("history")) {
    EpochRecord rec;
    rec.epoch = e.at("epoch").get<int>();
    rec.steps = e.at("steps").get<int>();
    rec.train_risk = risk_breakdown_from_json(e.at("train_risk"));
    rec.val_accuracy = e.at("val_accuracy").get<double>();
    rec.lr = e.at("lr").get<double>();
    ckpt.history.push_back(rec);
  }
  std::size_t expected_offset = 0;
  for (const auto& e : header.at("entries")) {
    CheckpointEntry entry;
    entry.name = e.at("name").get<std::string>();
    entry.shape = e.at("shape").get<Shape>();
    entry.is_stat = e.at("kind").get<std::string>() == "stat";
    if (e.at("offset").get<std::size_t>() != expected_offset)
      throw DataError("checkpoint: unexpected payload offset for entry '" + entry.name + "'");
    const std::size_t count = shape_numel(entry.shape);
    entry.values.resize(count);
    for (std::size_t i = 0; i < count; ++i)
      entry.values[i] = width == 4 ? static_cast<double>(read_scalar_le<float>(in)) : read_scalar_le<double>(in);
    expected_offset += count * width;
    ckpt.entries.push_back(std::move(entry));
  }
  in.peek();
  if (!in.eof()) throw DataError("checkpoint: trailing bytes in " + path);
  return ckpt;
}

}  // namespace pulsar
