#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "jsae/activation_source.hpp"
#include "jsae/mlp.hpp"
#include "jsae/sae.hpp"
#include "jsae/trainer.hpp"

namespace jsae {

// Weight container layout, version 1:
//   "JSAE" | u32 version | u32 header_len | JSON header | padding
// followed by float32 little-endian row-major tensors in header order, each
// starting on a 64-byte boundary. The header records tensor names and shapes
// plus k, the MLP kind and activation, and a free-form "meta" object that
// callers can use for provenance.
void save_pair(const std::string& path, const SaePair& pair,
               const MlpParams& mlp, const nlohmann::json& meta = nlohmann::json::object());

struct LoadedPair {
  SaePair pair;
  MlpParams mlp;
  nlohmann::json meta;
};

// Throws FormatError naming the offending field on any validation failure.
LoadedPair load_pair(const std::string& path);

// Activation dump: 16-byte header ("JACT", u32 width, u64 count) followed by
// count tokens of width float32 little-endian values. The file size must be
// exactly 16 + 4 * width * count.
void save_activations(const std::string& path,
                      const std::vector<Eigen::VectorXd>& tokens);
std::vector<Eigen::VectorXd> load_activations(const std::string& path);

// Drain count tokens from a source into a dump.
void dump_source(const std::string& path, ActivationSource& source,
                 std::int64_t count);

class MemorySource final : public ActivationSource {
 public:
  MemorySource(std::vector<Eigen::VectorXd> tokens, Eigen::Index width);
  Eigen::Index width() const override { return width_; }
  bool next(Eigen::VectorXd& out) override;

 private:
  std::vector<Eigen::VectorXd> tokens_;
  std::size_t at_ = 0;
  Eigen::Index width_ = 0;
};

// Streams a dump without holding it in memory.
class FileSource final : public ActivationSource {
 public:
  explicit FileSource(const std::string& path);
  ~FileSource() override;
  FileSource(const FileSource&) = delete;
  FileSource& operator=(const FileSource&) = delete;

  Eigen::Index width() const override { return width_; }
  bool next(Eigen::VectorXd& out) override;

 private:
  struct Impl;
  Impl* impl_ = nullptr;
  Eigen::Index width_ = 0;
};

// Training timeline as CSV with doubles printed via %.17g, so equal runs
// produce byte-equal files.
std::string timeline_to_csv(const std::vector<StepMetrics>& timeline);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace jsae
