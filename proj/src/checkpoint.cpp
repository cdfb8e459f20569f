#include "rotenc/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rotenc {

namespace {

using json = nlohmann::json;

constexpr std::array<char, 8> kMagic{'R', 'O', 'T', 'E', 'N', 'C', '1', '\0'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ = (hash_ ^ p[i]) * 1099511628211ULL;
      buffer_.push_back(static_cast<char>(p[i]));
    }
  }
  template <typename T>
  void little(T value) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    bytes(raw, sizeof(T));
  }
  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void f64(double v) { little(v); }
  void text(const std::string& s) { bytes(s.data(), s.size()); }

  std::uint64_t hash() const { return hash_; }
  const std::string& buffer() const { return buffer_; }

 private:
  std::string buffer_;
  std::uint64_t hash_ = 1469598103934665603ULL;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorCode::FormatError, "checkpoint is truncated");
    }
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) hash_ = (hash_ ^ p[i]) * 1099511628211ULL;
  }
  template <typename T>
  T little() {
    unsigned char raw[sizeof(T)];
    bytes(raw, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  double f64() { return little<double>(); }
  std::string text(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 32)) throw Error(ErrorCode::FormatError, "checkpoint string length is implausible");
    std::string s(static_cast<std::size_t>(n), '\0');
    if (n > 0) bytes(s.data(), s.size());
    return s;
  }

  std::uint64_t hash() const { return hash_; }

 private:
  std::istream& in_;
  std::uint64_t hash_ = 1469598103934665603ULL;
};

}  // namespace

void save_checkpoint(std::ostream& out, const Model& model, const TrainConfig& train_config) {
  json header;
  header["train_config"] = to_json(train_config);
  header["model_config"] = to_json(model.config());
  header["vocabulary"] = model.vocabulary().elements();
  header["tasks"] = model.tasks();
  header["edge_width"] = model.edge_width();
  header["inference_seed"] = model.inference_seed();
  const std::string header_text = header.dump();

  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(checkpoint_version);
  w.u64(header_text.size());
  w.text(header_text);

  const auto t = static_cast<std::size_t>(model.normalizer.mean.size());
  w.u64(t);
  for (std::size_t i = 0; i < t; ++i) w.f64(model.normalizer.mean(static_cast<Eigen::Index>(i)));
  for (std::size_t i = 0; i < t; ++i) w.f64(model.normalizer.stddev(static_cast<Eigen::Index>(i)));

  const NamedTensors tensors = model.state().snapshot();
  w.u64(tensors.size());
  for (const auto& [name, tensor] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.text(name);
    w.u64(static_cast<std::uint64_t>(tensor.rows()));
    w.u64(static_cast<std::uint64_t>(tensor.cols()));
    for (Eigen::Index i = 0; i < tensor.rows(); ++i) {
      for (Eigen::Index j = 0; j < tensor.cols(); ++j) w.f64(tensor(i, j));
    }
  }
  const std::uint64_t checksum = w.hash();
  w.u64(checksum);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw Error(ErrorCode::IoError, "failed to write checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& train_config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path.string());
  save_checkpoint(out, model, train_config);
}

Checkpoint load_checkpoint(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw Error(ErrorCode::FormatError, "not a checkpoint (bad magic header)");
  const std::uint32_t version = r.u32();
  if (version != checkpoint_version) {
    throw Error(ErrorCode::FormatError, "unsupported checkpoint version " + std::to_string(version));
  }
  json header;
  try {
    header = json::parse(r.text(r.u64()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  try {
    TrainConfig train_config = train_config_from_json(header.at("train_config"));
    ModelConfig model_config = model_config_from_json(header.at("model_config"));
    Vocabulary vocabulary(header.at("vocabulary").get<std::vector<int>>());
    auto tasks = header.at("tasks").get<std::vector<std::string>>();
    const auto edge_width = header.at("edge_width").get<ad::Index>();
    const auto inference_seed = header.at("inference_seed").get<std::uint64_t>();
    Model model(std::move(model_config), std::move(vocabulary), std::move(tasks), edge_width, 0, inference_seed);

    const std::uint64_t t = r.u64();
    if (t != model.tasks().size()) throw Error(ErrorCode::FormatError, "normalizer width does not match the task list");
    model.normalizer.mean.resize(static_cast<Eigen::Index>(t));
    model.normalizer.stddev.resize(static_cast<Eigen::Index>(t));
    for (std::uint64_t i = 0; i < t; ++i) model.normalizer.mean(static_cast<Eigen::Index>(i)) = r.f64();
    for (std::uint64_t i = 0; i < t; ++i) model.normalizer.stddev(static_cast<Eigen::Index>(i)) = r.f64();

    NamedTensors tensors;
    const std::uint64_t count = r.u64();
    for (std::uint64_t a = 0; a < count; ++a) {
      const std::string name = r.text(r.u32());
      const std::uint64_t rows = r.u64();
      const std::uint64_t cols = r.u64();
      if (rows > (std::uint64_t{1} << 28) || cols > (std::uint64_t{1} << 28)) {
        throw Error(ErrorCode::FormatError, "array " + name + " has an implausible shape");
      }
      ad::Tensor tensor(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index i = 0; i < tensor.rows(); ++i) {
        for (Eigen::Index j = 0; j < tensor.cols(); ++j) tensor(i, j) = r.f64();
      }
      if (!tensors.emplace(name, std::move(tensor)).second) throw Error(ErrorCode::FormatError, "duplicate array " + name);
    }
    const std::uint64_t expected = r.hash();
    if (r.u64() != expected) throw Error(ErrorCode::FormatError, "checkpoint checksum mismatch");
    model.state().restore(tensors);
    return Checkpoint{std::move(model), std::move(train_config)};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("checkpoint header is incomplete: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace rotenc
