#include "jsae/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "jsae/errors.hpp"

namespace jsae {

namespace {

constexpr char kWeightMagic[4] = {'J', 'S', 'A', 'E'};
constexpr char kDumpMagic[4] = {'J', 'A', 'C', 'T'};
constexpr std::uint32_t kWeightVersion = 1;
constexpr std::size_t kTensorAlign = 64;

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return v;
}

void append_f32(std::string& buf, double v) {
  float f = static_cast<float>(v);
  char bytes[4];
  std::memcpy(bytes, &f, 4);
  buf.append(bytes, 4);
}

double read_f32(const char* at) {
  float f;
  std::memcpy(&f, at, 4);
  return static_cast<double>(f);
}

void pad_to(std::string& buf, std::size_t align) {
  while (buf.size() % align != 0) buf.push_back('\0');
}

std::string read_whole_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open file");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

struct TensorView {
  std::string name;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;
};

// The serialization order of all tensors; matrices are written row-major.
std::vector<TensorView> tensor_views(const SaePair& pair, const MlpParams& mlp) {
  std::vector<TensorView> views;
  auto add_mat = [&views](const char* name, const Eigen::MatrixXd& m) {
    views.push_back({name, m.data(), m.rows(), m.cols()});
  };
  auto add_vec = [&views](const char* name, const Eigen::VectorXd& v) {
    views.push_back({name, v.data(), v.size(), 1});
  };
  add_mat("input.w_enc", pair.input_sae.w_enc);
  add_vec("input.b_enc", pair.input_sae.b_enc);
  add_mat("input.w_dec", pair.input_sae.w_dec);
  add_vec("input.b_dec", pair.input_sae.b_dec);
  add_mat("output.w_enc", pair.output_sae.w_enc);
  add_vec("output.b_enc", pair.output_sae.b_enc);
  add_mat("output.w_dec", pair.output_sae.w_dec);
  add_vec("output.b_dec", pair.output_sae.b_dec);
  add_mat("mlp.w1", mlp.w1);
  add_vec("mlp.b1", mlp.b1);
  add_mat("mlp.w2", mlp.w2);
  add_vec("mlp.b2", mlp.b2);
  if (mlp.kind == MlpKind::Glu) {
    add_mat("mlp.w_gate", mlp.w_gate);
    add_vec("mlp.b_gate", mlp.b_gate);
  }
  return views;
}

}  // namespace

void save_pair(const std::string& path, const SaePair& pair,
               const MlpParams& mlp, const nlohmann::json& meta) {
  validate(mlp);
  std::vector<TensorView> views = tensor_views(pair, mlp);

  nlohmann::json header;
  header["k"] = pair.input_sae.k;
  header["mlp_kind"] = to_string(mlp.kind);
  header["activation"] = to_string(mlp.activation);
  header["meta"] = meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const TensorView& view : views) {
    tensors.push_back({{"name", view.name},
                       {"rows", view.rows},
                       {"cols", view.cols}});
  }
  header["tensors"] = tensors;
  std::string header_bytes = header.dump();

  std::string buf;
  buf.append(kWeightMagic, 4);
  append_u32(buf, kWeightVersion);
  append_u32(buf, static_cast<std::uint32_t>(header_bytes.size()));
  buf += header_bytes;
  for (const TensorView& view : views) {
    pad_to(buf, kTensorAlign);
    // Eigen stores column-major; emit row-major explicitly.
    for (Eigen::Index r = 0; r < view.rows; ++r)
      for (Eigen::Index c = 0; c < view.cols; ++c)
        append_f32(buf, view.data[c * view.rows + r]);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open file for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError(path + ": write failed");
}

LoadedPair load_pair(const std::string& path) {
  std::string data = read_whole_file(path);
  if (data.size() < 12) throw FormatError(path + ": truncated fixed header");
  if (std::memcmp(data.data(), kWeightMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, expected \"JSAE\"");
  }
  std::uint32_t version = read_u32(data, 4);
  if (version != kWeightVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  }
  std::uint32_t header_len = read_u32(data, 8);
  if (12 + static_cast<std::size_t>(header_len) > data.size()) {
    throw FormatError(path + ": header length exceeds file size");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(12, header_len));
  } catch (const nlohmann::json::exception&) {
    throw FormatError(path + ": header is not valid JSON");
  }

  for (const char* key : {"k", "mlp_kind", "activation", "tensors"}) {
    if (!header.contains(key)) {
      throw FormatError(path + ": header is missing \"" + key + "\"");
    }
  }

  LoadedPair loaded;
  loaded.meta = header.value("meta", nlohmann::json::object());
  int k;
  MlpKind kind;
  ActivationKind activation;
  try {
    k = header.at("k").get<int>();
    kind = mlp_kind_from_string(header.at("mlp_kind").get<std::string>());
    activation = activation_from_string(header.at("activation").get<std::string>());
  } catch (const std::exception& e) {
    throw FormatError(path + ": bad header field: " + e.what());
  }

  std::size_t at = 12 + header_len;
  auto read_tensor = [&](const nlohmann::json& spec) {
    while (at % kTensorAlign != 0) ++at;
    if (!spec.contains("name") || !spec.contains("rows") || !spec.contains("cols")) {
      throw FormatError(path + ": tensor entry is missing name/rows/cols");
    }
    Eigen::Index rows = spec.at("rows").get<Eigen::Index>();
    Eigen::Index cols = spec.at("cols").get<Eigen::Index>();
    if (rows < 1 || cols < 1) {
      throw FormatError(path + ": tensor \"" + spec.at("name").get<std::string>() +
                        "\" has non-positive shape");
    }
    std::size_t bytes = 4 * static_cast<std::size_t>(rows * cols);
    if (at + bytes > data.size()) {
      throw FormatError(path + ": tensor \"" + spec.at("name").get<std::string>() +
                        "\" extends past end of file");
    }
    Eigen::MatrixXd mat(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        mat(r, c) = read_f32(data.data() + at);
        at += 4;
      }
    return mat;
  };

  const nlohmann::json& tensors = header.at("tensors");
  std::vector<std::string> expected = {
      "input.w_enc", "input.b_enc", "input.w_dec", "input.b_dec",
      "output.w_enc", "output.b_enc", "output.w_dec", "output.b_dec",
      "mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"};
  if (kind == MlpKind::Glu) {
    expected.push_back("mlp.w_gate");
    expected.push_back("mlp.b_gate");
  }
  if (!tensors.is_array() || tensors.size() != expected.size()) {
    throw FormatError(path + ": header lists " +
                      std::to_string(tensors.is_array() ? tensors.size() : 0) +
                      " tensors, expected " + std::to_string(expected.size()));
  }

  std::vector<Eigen::MatrixXd> mats;
  mats.reserve(expected.size());
  for (std::size_t t = 0; t < expected.size(); ++t) {
    std::string name = tensors[t].value("name", "");
    if (name != expected[t]) {
      throw FormatError(path + ": tensor " + std::to_string(t) + " is \"" + name +
                        "\", expected \"" + expected[t] + "\"");
    }
    mats.push_back(read_tensor(tensors[t]));
  }
  if (at != data.size()) {
    throw FormatError(path + ": trailing bytes after the final tensor");
  }

  auto as_vector = [&path](const Eigen::MatrixXd& m, const char* name) {
    if (m.cols() != 1) {
      throw FormatError(path + ": tensor \"" + name + "\" must have cols == 1");
    }
    return Eigen::VectorXd(m.col(0));
  };

  loaded.pair.input_sae.w_enc = mats[0];
  loaded.pair.input_sae.b_enc = as_vector(mats[1], "input.b_enc");
  loaded.pair.input_sae.w_dec = mats[2];
  loaded.pair.input_sae.b_dec = as_vector(mats[3], "input.b_dec");
  loaded.pair.input_sae.k = k;
  loaded.pair.output_sae.w_enc = mats[4];
  loaded.pair.output_sae.b_enc = as_vector(mats[5], "output.b_enc");
  loaded.pair.output_sae.w_dec = mats[6];
  loaded.pair.output_sae.b_dec = as_vector(mats[7], "output.b_dec");
  loaded.pair.output_sae.k = k;
  loaded.mlp.kind = kind;
  loaded.mlp.activation = activation;
  loaded.mlp.w1 = mats[8];
  loaded.mlp.b1 = as_vector(mats[9], "mlp.b1");
  loaded.mlp.w2 = mats[10];
  loaded.mlp.b2 = as_vector(mats[11], "mlp.b2");
  if (kind == MlpKind::Glu) {
    loaded.mlp.w_gate = mats[12];
    loaded.mlp.b_gate = as_vector(mats[13], "mlp.b_gate");
  }

  auto shapes_ok = [&loaded]() {
    const SaeParams& in = loaded.pair.input_sae;
    const SaeParams& out = loaded.pair.output_sae;
    const MlpParams& mlp = loaded.mlp;
    return in.w_dec.rows() == in.m() && in.w_dec.cols() == in.n() &&
           in.b_enc.size() == in.n() && in.b_dec.size() == in.m() &&
           out.w_dec.rows() == out.m() && out.w_dec.cols() == out.n() &&
           out.b_enc.size() == out.n() && out.b_dec.size() == out.m() &&
           in.m() == mlp.m_in() && out.m() == mlp.m_out() &&
           in.k >= 1 && in.k <= in.n() && out.k <= out.n();
  };
  if (!shapes_ok()) {
    throw FormatError(path + ": tensor shapes are inconsistent");
  }
  try {
    validate(loaded.mlp);
  } catch (const std::invalid_argument& e) {
    throw FormatError(path + ": " + e.what());
  }
  return loaded;
}

void save_activations(const std::string& path,
                      const std::vector<Eigen::VectorXd>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("save_activations: no tokens");
  const Eigen::Index m = tokens[0].size();
  if (m < 1 || m > static_cast<Eigen::Index>(std::numeric_limits<std::uint32_t>::max())) {
    throw std::invalid_argument("save_activations: bad token width");
  }
  std::string buf;
  buf.append(kDumpMagic, 4);
  append_u32(buf, static_cast<std::uint32_t>(m));
  append_u64(buf, static_cast<std::uint64_t>(tokens.size()));
  for (const Eigen::VectorXd& tok : tokens) {
    if (tok.size() != m) {
      throw std::invalid_argument("save_activations: token width mismatch");
    }
    for (Eigen::Index i = 0; i < m; ++i) append_f32(buf, tok[i]);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open file for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError(path + ": write failed");
}

namespace {

struct DumpHeader {
  Eigen::Index width = 0;
  std::uint64_t count = 0;
};

DumpHeader parse_dump_header(const std::string& path, std::istream& in,
                             std::uint64_t file_size) {
  char fixed[16];
  in.read(fixed, 16);
  if (in.gcount() != 16) throw FormatError(path + ": truncated dump header");
  if (std::memcmp(fixed, kDumpMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, expected \"JACT\"");
  }
  std::string head(fixed, 16);
  DumpHeader h;
  h.width = static_cast<Eigen::Index>(read_u32(head, 4));
  h.count = read_u64(head, 8);
  if (h.width < 1) throw FormatError(path + ": dump width must be positive");
  std::uint64_t expect =
      16 + 4ull * static_cast<std::uint64_t>(h.width) * h.count;
  if (file_size != expect) {
    throw FormatError(path + ": file size " + std::to_string(file_size) +
                      " does not match header (expected " +
                      std::to_string(expect) + ")");
  }
  return h;
}

std::uint64_t file_size_of(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError(path + ": cannot open file");
  return static_cast<std::uint64_t>(in.tellg());
}

}  // namespace

std::vector<Eigen::VectorXd> load_activations(const std::string& path) {
  std::uint64_t size = file_size_of(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open file");
  DumpHeader h = parse_dump_header(path, in, size);
  std::vector<Eigen::VectorXd> tokens;
  tokens.reserve(static_cast<std::size_t>(h.count));
  std::vector<char> row(4 * static_cast<std::size_t>(h.width));
  for (std::uint64_t t = 0; t < h.count; ++t) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    if (in.gcount() != static_cast<std::streamsize>(row.size())) {
      throw FormatError(path + ": truncated token data");
    }
    Eigen::VectorXd tok(h.width);
    for (Eigen::Index i = 0; i < h.width; ++i)
      tok[i] = read_f32(row.data() + 4 * i);
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

void dump_source(const std::string& path, ActivationSource& source,
                 std::int64_t count) {
  if (count < 1) throw std::invalid_argument("dump_source: count must be positive");
  std::vector<Eigen::VectorXd> tokens;
  tokens.reserve(static_cast<std::size_t>(count));
  Eigen::VectorXd tok(source.width());
  for (std::int64_t i = 0; i < count; ++i) {
    if (!source.next(tok)) {
      throw DataExhausted("dump_source: source exhausted after " +
                          std::to_string(i) + " tokens");
    }
    // Quantize through f32 immediately so that training from this source and
    // training from the written file see bit-identical tokens.
    for (Eigen::Index d = 0; d < tok.size(); ++d)
      tok[d] = static_cast<double>(static_cast<float>(tok[d]));
    tokens.push_back(tok);
  }
  save_activations(path, tokens);
}

MemorySource::MemorySource(std::vector<Eigen::VectorXd> tokens, Eigen::Index width)
    : tokens_(std::move(tokens)), width_(width) {
  for (const auto& t : tokens_) {
    if (t.size() != width_) {
      throw std::invalid_argument("MemorySource: token width mismatch");
    }
  }
}

bool MemorySource::next(Eigen::VectorXd& out) {
  if (at_ >= tokens_.size()) return false;
  out = tokens_[at_++];
  return true;
}

struct FileSource::Impl {
  std::ifstream in;
  std::uint64_t remaining = 0;
  std::vector<char> row;
};

FileSource::FileSource(const std::string& path) {
  std::uint64_t size = file_size_of(path);
  impl_ = new Impl;
  try {
    impl_->in.open(path, std::ios::binary);
    if (!impl_->in) throw FormatError(path + ": cannot open file");
    DumpHeader h = parse_dump_header(path, impl_->in, size);
    width_ = h.width;
    impl_->remaining = h.count;
    impl_->row.resize(4 * static_cast<std::size_t>(h.width));
  } catch (...) {
    delete impl_;
    impl_ = nullptr;
    throw;
  }
}

FileSource::~FileSource() { delete impl_; }

bool FileSource::next(Eigen::VectorXd& out) {
  if (impl_->remaining == 0) return false;
  impl_->in.read(impl_->row.data(), static_cast<std::streamsize>(impl_->row.size()));
  if (impl_->in.gcount() != static_cast<std::streamsize>(impl_->row.size())) {
    throw FormatError("FileSource: truncated token data");
  }
  --impl_->remaining;
  out.resize(width_);
  for (Eigen::Index i = 0; i < width_; ++i)
    out[i] = read_f32(impl_->row.data() + 4 * i);
  return true;
}

std::string timeline_to_csv(const std::vector<StepMetrics>& timeline) {
  std::string csv = "step,lr,lambda,mse_x,mse_y,jac_l1,total,dead_x,dead_y\n";
  char buf[512];
  for (const StepMetrics& m : timeline) {
    std::snprintf(buf, sizeof(buf),
                  "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld,%lld\n",
                  static_cast<long long>(m.step), m.lr, m.lambda, m.mse_x,
                  m.mse_y, m.jac_l1, m.total, static_cast<long long>(m.dead_x),
                  static_cast<long long>(m.dead_y));
    csv += buf;
  }
  return csv;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open file for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError(path + ": write failed");
}

}  // namespace jsae
