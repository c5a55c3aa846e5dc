#include "recurrent_octomap/neural/weights_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "recurrent_octomap/common/binary_io.hpp"
#include "recurrent_octomap/common/errors.hpp"

namespace rom {
namespace {

constexpr char kMagic[9] = "ROMWGHTS";
// Guards against absurd allocations when reading a corrupt header.
constexpr std::uint32_t kMaxCount = 1u << 26;

std::uint32_t checked_count(std::istream& in, const std::string& field) {
  const auto n = binary::read<std::uint32_t>(in, field);
  if (n > kMaxCount) throw LoadError("weight file: implausible value for '" + field + "'");
  return n;
}

}  // namespace

void write_weight_file(std::ostream& out, const WeightFile& file) {
  binary::write_magic(out, kMagic);
  binary::write<std::uint32_t>(out, kWeightFormatVersion);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(file.kind));
  binary::write<std::uint32_t>(out, file.class_count);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(file.dims.size()));
  for (auto d : file.dims) binary::write<std::uint32_t>(out, d);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

WeightFile read_weight_file(std::istream& in) {
  binary::expect_magic(in, kMagic, "weight file");
  const auto version = binary::read<std::uint32_t>(in, "version");
  if (version != kWeightFormatVersion) {
    throw LoadError("weight file: unsupported version " + std::to_string(version) +
                    " (expected " + std::to_string(kWeightFormatVersion) + ")");
  }
  WeightFile file;
  const auto kind = binary::read<std::uint32_t>(in, "kind");
  if (kind != static_cast<std::uint32_t>(ModelKind::kLstm) &&
      kind != static_cast<std::uint32_t>(ModelKind::kPerception)) {
    throw LoadError("weight file: unknown model kind " + std::to_string(kind));
  }
  file.kind = static_cast<ModelKind>(kind);
  file.class_count = binary::read<std::uint32_t>(in, "class_count");
  file.dims.resize(checked_count(in, "dims count"));
  for (std::size_t i = 0; i < file.dims.size(); ++i) {
    file.dims[i] = binary::read<std::uint32_t>(in, "dims[" + std::to_string(i) + "]");
  }
  file.tensors.resize(checked_count(in, "tensor count"));
  for (std::size_t i = 0; i < file.tensors.size(); ++i) {
    const std::string name = "tensor[" + std::to_string(i) + "]";
    const auto rows = checked_count(in, name + ".rows");
    const auto cols = checked_count(in, name + ".cols");
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.values().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw LoadError("unexpected end of file while reading '" + name + ".values'");
    file.tensors[i] = std::move(m);
  }
  return file;
}

void save_weight_file(const std::filesystem::path& path, const WeightFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  write_weight_file(out, file);
  if (!out) throw LoadError("failed writing " + path.string());
}

WeightFile load_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open weight file " + path.string());
  try {
    return read_weight_file(in);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

std::string weight_file_to_text(const WeightFile& file) {
  nlohmann::json j;
  j["magic"] = std::string(kMagic, 8);
  j["version"] = kWeightFormatVersion;
  j["kind"] = file.kind == ModelKind::kLstm ? "lstm" : "perception";
  j["class_count"] = file.class_count;
  j["dims"] = file.dims;
  j["tensors"] = nlohmann::json::array();
  for (const auto& t : file.tensors) {
    j["tensors"].push_back({{"rows", t.rows()},
                            {"cols", t.cols()},
                            {"values", std::vector<double>(t.values().begin(),
                                                           t.values().end())}});
  }
  return j.dump(1);
}

WeightFile weight_file_from_text(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("magic").get<std::string>() != std::string(kMagic, 8)) {
      throw LoadError("weight text: bad magic");
    }
    if (j.at("version").get<std::uint32_t>() != kWeightFormatVersion) {
      throw LoadError("weight text: unsupported version");
    }
    WeightFile file;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "lstm") {
      file.kind = ModelKind::kLstm;
    } else if (kind == "perception") {
      file.kind = ModelKind::kPerception;
    } else {
      throw LoadError("weight text: unknown kind '" + kind + "'");
    }
    file.class_count = j.at("class_count").get<std::uint32_t>();
    file.dims = j.at("dims").get<std::vector<std::uint32_t>>();
    for (const auto& t : j.at("tensors")) {
      Matrix m(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
      const auto values = t.at("values").get<std::vector<double>>();
      if (values.size() != m.size()) throw LoadError("weight text: tensor size mismatch");
      std::copy(values.begin(), values.end(), m.values().begin());
      file.tensors.push_back(std::move(m));
    }
    return file;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("weight text: ") + e.what());
  }
}

WeightFile to_weight_file(const LstmParams& params) {
  params.validate();
  WeightFile file;
  file.kind = ModelKind::kLstm;
  file.class_count = static_cast<std::uint32_t>(params.class_count);
  file.dims = {static_cast<std::uint32_t>(params.input_dim),
               static_cast<std::uint32_t>(params.hidden_dim),
               static_cast<std::uint32_t>(params.num_layers())};
  auto vec = [](const Vector& v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.values().begin());
    return m;
  };
  for (const auto& layer : params.layers) {
    file.tensors.push_back(layer.input_weight);
    file.tensors.push_back(layer.recurrent_weight);
    file.tensors.push_back(vec(layer.bias));
  }
  file.tensors.push_back(params.decoder_weight);
  file.tensors.push_back(vec(params.decoder_bias));
  return file;
}

LstmParams lstm_from_weight_file(const WeightFile& file) {
  if (file.kind != ModelKind::kLstm) throw LoadError("weight file does not hold an LSTM");
  if (file.dims.size() != 3) throw LoadError("LSTM weight file: expected 3 dims");
  LstmParams p;
  p.input_dim = file.dims[0];
  p.hidden_dim = file.dims[1];
  const std::size_t layers = file.dims[2];
  p.class_count = file.class_count;
  if (file.tensors.size() != 3 * layers + 2) {
    throw LoadError("LSTM weight file: expected " + std::to_string(3 * layers + 2) +
                    " tensors, found " + std::to_string(file.tensors.size()));
  }
  auto vec = [](const Matrix& m) { return Vector(m.values().begin(), m.values().end()); };
  std::size_t k = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    LstmLayer layer;
    layer.input_weight = file.tensors[k++];
    layer.recurrent_weight = file.tensors[k++];
    layer.bias = vec(file.tensors[k++]);
    p.layers.push_back(std::move(layer));
  }
  p.decoder_weight = file.tensors[k++];
  p.decoder_bias = vec(file.tensors[k++]);
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("LSTM weight file: ") + e.what());
  }
  return p;
}

void save_lstm(const std::filesystem::path& path, const LstmParams& params) {
  save_weight_file(path, to_weight_file(params));
}

LstmParams load_lstm(const std::filesystem::path& path) {
  return lstm_from_weight_file(load_weight_file(path));
}

}  // namespace rom
