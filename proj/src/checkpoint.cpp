#include "him/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace him {

namespace {

constexpr char kMagic[8] = {'H', 'I', 'M', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const double* p, int64_t n) {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(p), n * 8);
  } else {
    for (int64_t i = 0; i < n; ++i) write_u64(out, std::bit_cast<uint64_t>(p[i]));
  }
}

void read_doubles(std::istream& in, double* p, int64_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(p), n * 8);
  } else {
    for (int64_t i = 0; i < n; ++i) {
      uint64_t v = read_u64(in);
      p[i] = std::bit_cast<double>(v);
    }
  }
}

nlohmann::json read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint64_t len = read_u64(in);
  if (!in || len == 0 || len > (64u << 20))
    throw IoError("corrupt checkpoint header: " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  nlohmann::json h = nlohmann::json::parse(text, nullptr, false);
  if (h.is_discarded()) throw IoError("corrupt checkpoint header: " + path);
  return h;
}

CheckpointInfo info_from_header(const nlohmann::json& h, const std::string& path) {
  if (!h.contains("config") || !h.contains("step") || !h.contains("params"))
    throw IoError("incomplete checkpoint header: " + path);
  CheckpointInfo info;
  info.config = run_config_from_json(h.at("config"));
  info.step = h.at("step").get<int64_t>();
  info.has_optimizer = h.contains("optimizer") && !h.at("optimizer").is_null();
  return info;
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const nn::ParamSet& params, const AdamW* opt,
                     int64_t step) {
  nlohmann::ordered_json h;
  h["format"] = 1;
  h["step"] = step;
  h["config"] = run_config_to_json(cfg);
  nlohmann::ordered_json plist = nlohmann::ordered_json::array();
  for (const auto& [name, var] : params.items()) {
    nlohmann::ordered_json p;
    p["name"] = name;
    p["shape"] = var.val().shape();
    plist.push_back(std::move(p));
  }
  h["params"] = std::move(plist);
  if (opt) {
    h["optimizer"] = {{"algorithm", "adamw"}, {"t", opt->step_count()}};
  } else {
    h["optimizer"] = nullptr;
  }

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
    out.write(kMagic, 8);
    std::string text = h.dump();
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, var] : params.items()) {
      (void)name;
      write_doubles(out, var.val().data(), var.val().numel());
    }
    if (opt) {
      for (const Tensor& m : opt->first_moments())
        write_doubles(out, m.data(), m.numel());
      for (const Tensor& v : opt->second_moments())
        write_doubles(out, v.data(), v.numel());
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move checkpoint into place: " + path);
}

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return info_from_header(read_header(in, path), path);
}

CheckpointInfo load_checkpoint(const std::string& path, nn::ParamSet& params,
                               AdamW* opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json h = read_header(in, path);
  CheckpointInfo info = info_from_header(h, path);

  const auto& plist = h.at("params");
  const auto& items = params.items();
  if (plist.size() != items.size())
    throw ConfigError("checkpoint has " + std::to_string(plist.size()) +
                      " parameters, model has " + std::to_string(items.size()));
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string name = plist[i].at("name").get<std::string>();
    const std::vector<int> shape = plist[i].at("shape").get<std::vector<int>>();
    if (name != items[i].first)
      throw ConfigError("checkpoint parameter " + std::to_string(i) + " is '" +
                        name + "', model expects '" + items[i].first + "'");
    if (shape != items[i].second.val().shape())
      throw ConfigError("shape mismatch for parameter '" + name + "'");
  }
  for (const auto& [name, var] : items) {
    (void)name;
    Tensor& value = var.node()->value;
    read_doubles(in, value.data(), value.numel());
  }
  if (!in) throw IoError("truncated checkpoint payload: " + path);

  if (opt) {
    if (!info.has_optimizer)
      throw ConfigError("checkpoint has no optimizer state: " + path);
    auto& m = opt->first_moments();
    auto& v = opt->second_moments();
    if (m.size() != items.size())
      throw ConfigError("optimizer tracks a different parameter set");
    for (size_t i = 0; i < m.size(); ++i) read_doubles(in, m[i].data(), m[i].numel());
    for (size_t i = 0; i < v.size(); ++i) read_doubles(in, v[i].data(), v[i].numel());
    if (!in) throw IoError("truncated optimizer state: " + path);
    opt->set_step_count(h.at("optimizer").at("t").get<int64_t>());
  }
  return info;
}

}  // namespace him
