#include "dcpl/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "dcpl/common.hpp"
#include "dcpl/errors.hpp"

namespace dcpl {

using json = nlohmann::ordered_json;

const char* to_string(SublayerKind kind) {
  switch (kind) {
    case SublayerKind::SelfAttention: return "self_attention";
    case SublayerKind::CrossAttention: return "cross_attention";
    case SublayerKind::FeedForward: return "feed_forward";
  }
  return "?";
}

SublayerKind decoder_sublayer_kind(int lambda) {
  switch (lambda % 3) {
    case 1: return SublayerKind::SelfAttention;
    case 2: return SublayerKind::CrossAttention;
    default: return SublayerKind::FeedForward;
  }
}

SublayerKind encoder_sublayer_kind(int lambda) {
  return lambda % 2 == 1 ? SublayerKind::SelfAttention : SublayerKind::FeedForward;
}

namespace {

SublayerWeights make_sublayer(const ModelConfig& cfg, SublayerKind kind) {
  SublayerWeights sl;
  sl.kind = kind;
  int d = cfg.model_dim;
  int dh = cfg.head_dim();
  if (kind == SublayerKind::FeedForward) {
    sl.feed_forward.w_in = Mat::Zero(cfg.ffn_dim, d);
    sl.feed_forward.b_in = Vec::Zero(cfg.ffn_dim);
    sl.feed_forward.w_out = Mat::Zero(d, cfg.ffn_dim);
    sl.feed_forward.b_out = Vec::Zero(d);
  } else {
    sl.attention.heads.resize(cfg.num_heads);
    for (auto& head : sl.attention.heads) {
      head.w_q = Mat::Zero(dh, d);
      head.w_k = Mat::Zero(dh, d);
      head.w_v = Mat::Zero(dh, d);
      head.b_q = Vec::Zero(dh);
      head.b_k = Vec::Zero(dh);
      head.b_v = Vec::Zero(dh);
    }
    sl.attention.w_o = Mat::Zero(d, d);
    sl.attention.b_o = Vec::Zero(d);
  }
  sl.layer_norm.gain = Vec::Zero(d);
  sl.layer_norm.bias = Vec::Zero(d);
  return sl;
}

void append_matrix(std::vector<TensorEntry>& out, const std::string& name, Mat& m) {
  out.push_back({name, {m.rows(), m.cols()}, m.data(), m.size()});
}

void append_vector(std::vector<TensorEntry>& out, const std::string& name, Vec& v) {
  out.push_back({name, {v.size()}, v.data(), v.size()});
}

void append_sublayer(std::vector<TensorEntry>& out, const std::string& prefix, SublayerWeights& sl) {
  if (sl.kind == SublayerKind::FeedForward) {
    append_matrix(out, prefix + ".ff.W_in", sl.feed_forward.w_in);
    append_vector(out, prefix + ".ff.b_in", sl.feed_forward.b_in);
    append_matrix(out, prefix + ".ff.W_out", sl.feed_forward.w_out);
    append_vector(out, prefix + ".ff.b_out", sl.feed_forward.b_out);
  } else {
    for (std::size_t h = 0; h < sl.attention.heads.size(); ++h) {
      std::string hp = prefix + ".ma.h" + std::to_string(h + 1);
      auto& head = sl.attention.heads[h];
      append_matrix(out, hp + ".W_Q", head.w_q);
      append_vector(out, hp + ".b_Q", head.b_q);
      append_matrix(out, hp + ".W_K", head.w_k);
      append_vector(out, hp + ".b_K", head.b_k);
      append_matrix(out, hp + ".W_V", head.w_v);
      append_vector(out, hp + ".b_V", head.b_v);
    }
    append_matrix(out, prefix + ".ma.W_O", sl.attention.w_o);
    append_vector(out, prefix + ".ma.b_O", sl.attention.b_o);
  }
  append_vector(out, prefix + ".ln.g", sl.layer_norm.gain);
  append_vector(out, prefix + ".ln.b", sl.layer_norm.bias);
}

}  // namespace

std::vector<TensorEntry> tensor_entries(Model& model) {
  std::vector<TensorEntry> out;
  append_matrix(out, "emb.table", model.embedding);
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    append_sublayer(out, "enc.sl" + std::to_string(i + 1), model.encoder[i]);
  }
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    append_sublayer(out, "dec.sl" + std::to_string(i + 1), model.decoder[i]);
  }
  return out;
}

std::vector<TensorEntry> tensor_entries(const Model& model) {
  return tensor_entries(const_cast<Model&>(model));
}

Model make_empty_model(const ModelConfig& config) {
  config.validate();
  Model model;
  model.config = config;
  model.embedding = Mat::Zero(config.vocab_size, config.model_dim);
  for (int i = 1; i <= config.encoder_sublayers(); ++i) {
    model.encoder.push_back(make_sublayer(config, encoder_sublayer_kind(i)));
  }
  for (int i = 1; i <= config.decoder_sublayers(); ++i) {
    model.decoder.push_back(make_sublayer(config, decoder_sublayer_kind(i)));
  }
  return model;
}

Model init_random(const ModelConfig& config, std::uint64_t seed) {
  Model model = make_empty_model(config);
  Rng rng(seed);
  double bound = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
  for (auto& entry : tensor_entries(model)) {
    bool is_gain = entry.name.ends_with(".ln.g");
    bool is_bias = entry.name.ends_with("b_Q") || entry.name.ends_with("b_K") ||
                   entry.name.ends_with("b_V") || entry.name.ends_with("b_O") ||
                   entry.name.ends_with("b_in") || entry.name.ends_with("b_out") ||
                   entry.name.ends_with(".ln.b");
    for (long i = 0; i < entry.size; ++i) {
      if (is_gain) {
        entry.data[i] = 1.0;
      } else if (is_bias) {
        entry.data[i] = 0.0;
      } else {
        entry.data[i] = rng.uniform(-bound, bound);
      }
    }
  }
  return model;
}

std::vector<Model> interpolate_checkpoints(const Model& a, const Model& b, int n) {
  if (a.config != b.config) {
    fail(ErrorKind::ConfigMismatch, "interpolation endpoints have different configs");
  }
  if (n < 2) {
    fail(ErrorKind::InvalidArgument, "interpolation needs n >= 2 checkpoints");
  }
  auto ta = tensor_entries(a);
  auto tb = tensor_entries(b);
  std::vector<Model> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    double alpha = static_cast<double>(k) / static_cast<double>(n - 1);
    Model blend = make_empty_model(a.config);
    auto tm = tensor_entries(blend);
    for (std::size_t t = 0; t < tm.size(); ++t) {
      for (long i = 0; i < tm[t].size; ++i) {
        tm[t].data[i] = (1.0 - alpha) * ta[t].data[i] + alpha * tb[t].data[i];
      }
    }
    out.push_back(std::move(blend));
  }
  return out;
}

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

constexpr std::uint32_t kContainerVersion = 1;
constexpr char kMagic[4] = {'D', 'C', 'P', 'L'};

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["num_layers"] = cfg.num_layers;
  j["model_dim"] = cfg.model_dim;
  j["num_heads"] = cfg.num_heads;
  j["ffn_dim"] = cfg.ffn_dim;
  j["vocab_size"] = cfg.vocab_size;
  j["activation"] = std::string(to_string(cfg.activation));
  j["ln_epsilon"] = cfg.ln_epsilon;
  j["max_positions"] = cfg.max_positions;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  try {
    cfg.num_layers = j.at("num_layers").get<int>();
    cfg.model_dim = j.at("model_dim").get<int>();
    cfg.num_heads = j.at("num_heads").get<int>();
    cfg.ffn_dim = j.at("ffn_dim").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.activation = activation_from_string(j.at("activation").get<std::string>());
    cfg.ln_epsilon = j.at("ln_epsilon").get<double>();
    cfg.max_positions = j.at("max_positions").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedContainer, std::string("bad config header: ") + e.what());
  }
  return cfg;
}

// Row-major element order for serialization regardless of Eigen's storage.
void write_tensor_row_major(std::string& out, const TensorEntry& entry) {
  auto put = [&out](double value) {
    put_u64_le(out, std::bit_cast<std::uint64_t>(value));
  };
  if (entry.shape.size() == 1) {
    for (long i = 0; i < entry.size; ++i) put(entry.data[i]);
  } else {
    long rows = entry.shape[0], cols = entry.shape[1];
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) put(entry.data[c * rows + r]);
    }
  }
}

void read_tensor_row_major(const unsigned char* payload, std::uint64_t offset, TensorEntry& entry) {
  auto get = [&](long index) {
    return std::bit_cast<double>(get_u64_le(payload + offset + 8 * index));
  };
  if (entry.shape.size() == 1) {
    for (long i = 0; i < entry.size; ++i) entry.data[i] = get(i);
  } else {
    long rows = entry.shape[0], cols = entry.shape[1];
    long index = 0;
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) entry.data[c * rows + r] = get(index++);
    }
  }
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  auto entries = tensor_entries(model);

  json index = json::object();
  std::uint64_t offset = 0;
  std::string payload;
  for (const auto& entry : entries) {
    index[entry.name] = {{"shape", entry.shape}, {"offset", offset}};
    write_tensor_row_major(payload, entry);
    offset += static_cast<std::uint64_t>(entry.size) * 8;
  }
  json header;
  header["config"] = config_to_json(model.config);
  header["tensors"] = index;
  std::string header_bytes = header.dump();

  std::string blob;
  blob.append(kMagic, 4);
  put_u32_le(blob, kContainerVersion);
  put_u64_le(blob, header_bytes.size());
  blob += header_bytes;
  blob += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open model file: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 4) != 0) {
    fail(ErrorKind::MalformedContainer, "bad magic bytes");
  }
  std::uint32_t version = get_u32_le(bytes + 4);
  if (version != kContainerVersion) {
    fail(ErrorKind::MalformedContainer, "unsupported container version " + std::to_string(version));
  }
  std::uint64_t header_len = get_u64_le(bytes + 8);
  if (16 + header_len > blob.size()) {
    fail(ErrorKind::MalformedContainer, "header length exceeds file size");
  }
  json header = json::parse(blob.substr(16, header_len), nullptr, false);
  if (header.is_discarded() || !header.contains("config") || !header.contains("tensors")) {
    fail(ErrorKind::MalformedContainer, "unparseable JSON header");
  }
  ModelConfig config = config_from_json(header["config"]);
  config.validate();

  Model model = make_empty_model(config);
  auto entries = tensor_entries(model);
  const json& index = header["tensors"];
  if (index.size() != entries.size()) {
    fail(ErrorKind::MalformedContainer,
         "tensor count mismatch: expected " + std::to_string(entries.size()) + ", file has " +
             std::to_string(index.size()));
  }
  const unsigned char* payload = bytes + 16 + header_len;
  std::uint64_t payload_size = blob.size() - 16 - header_len;
  for (auto& entry : entries) {
    auto it = index.find(entry.name);
    if (it == index.end()) {
      fail(ErrorKind::MalformedContainer, "missing tensor: " + entry.name);
    }
    std::vector<long> shape = (*it).at("shape").get<std::vector<long>>();
    if (shape != entry.shape) {
      std::string want, got;
      for (long s : entry.shape) want += std::to_string(s) + " ";
      for (long s : shape) got += std::to_string(s) + " ";
      fail(ErrorKind::ShapeMismatch,
           "tensor " + entry.name + ": expected shape [ " + want + "], file has [ " + got + "]");
    }
    std::uint64_t offset = (*it).at("offset").get<std::uint64_t>();
    if (offset + static_cast<std::uint64_t>(entry.size) * 8 > payload_size) {
      fail(ErrorKind::MalformedContainer, "tensor " + entry.name + " extends past end of file");
    }
    read_tensor_row_major(payload, offset, entry);
    for (long i = 0; i < entry.size; ++i) {
      if (!std::isfinite(entry.data[i])) {
        fail(ErrorKind::NonFiniteTensor, "tensor " + entry.name + " contains a non-finite value");
      }
    }
  }
  return model;
}

}  // namespace dcpl
