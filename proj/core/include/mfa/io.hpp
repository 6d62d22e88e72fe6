#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfa/mixture.hpp"
#include "mfa/random.hpp"

namespace mfa {

// ---------------------------------------------------------------------------
// Activation batches
// ---------------------------------------------------------------------------

// count x d row-major 32-bit activations with optional per-row identifiers
// (original stream positions). Rows are promoted to 64-bit at the math
// boundary via row().
class ActivationBatch {
 public:
  ActivationBatch() = default;
  explicit ActivationBatch(std::size_t dim) : dim_(dim) {}
  ActivationBatch(std::size_t dim, std::vector<float> values, std::vector<std::uint64_t> ids = {});

  static ActivationBatch from_rows(const std::vector<Eigen::VectorXd>& rows);
  static ActivationBatch from_matrix(const Eigen::MatrixXd& rows);  // one row per vector

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const { return size() == 0; }
  bool has_ids() const { return !ids_.empty(); }

  Eigen::VectorXd row(std::size_t i) const;
  std::uint64_t id(std::size_t i) const { return has_ids() ? ids_.at(i) : i; }

  void append(std::span<const float> row, std::optional<std::uint64_t> id = std::nullopt);
  void append(const Eigen::VectorXd& row, std::optional<std::uint64_t> id = std::nullopt);
  void reserve(std::size_t rows) { values_.reserve(rows * dim_); }
  void clear() {
    values_.clear();
    ids_.clear();
  }

  std::span<const float> row_span(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const std::vector<float>& values() const { return values_; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::vector<std::uint64_t> ids_;
};

// ---------------------------------------------------------------------------
// "MFAA" activation files
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kActivationFormatVersion = 1;
inline constexpr std::size_t kActivationHeaderBytes = 21;  // 4 + 4 + 4 + 1 + 8

struct ActivationFileHeader {
  std::uint32_t version = kActivationFormatVersion;
  std::uint32_t dim = 0;
  std::uint8_t dtype = 0;  // 0 = float32
  std::uint64_t count = 0;
};

// Writes header + payload. Rejects rows containing NaN or infinity.
void write_activations(const std::filesystem::path& path, const ActivationBatch& batch);

// Reads and validates the header, including the payload length.
ActivationFileHeader read_activation_header(const std::filesystem::path& path);

// Reads the whole file; rows are tagged with their file positions.
ActivationBatch read_activations(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Activation sources
// ---------------------------------------------------------------------------

// A re-windable stream of activation rows. Not thread-safe.
class ActivationSource {
 public:
  virtual ~ActivationSource() = default;

  virtual std::size_t dim() const = 0;
  // Total rows in storage, including any excluded head.
  virtual std::uint64_t size() const = 0;

  // Reads rows [0, n) in storage order, independent of shuffling.
  virtual ActivationBatch read_head(std::size_t n) = 0;
  // Removes rows [0, n) from all subsequent passes.
  virtual void exclude_head(std::size_t n) = 0;

  // Starts a new pass. `pass_seed` drives the shuffle of that pass.
  virtual void rewind(std::uint64_t pass_seed) = 0;
  // Fills `out` with up to max_rows rows; returns false once the pass is done.
  virtual bool next_batch(std::size_t max_rows, ActivationBatch& out) = 0;
};

// File-backed stream with a bounded reservoir-style shuffle buffer. Holds at
// most shuffle_buffer + one batch of rows in memory. With shuffle_buffer = 0
// rows come out in file order.
class ActivationStream final : public ActivationSource {
 public:
  ActivationStream(const std::filesystem::path& path, std::size_t shuffle_buffer, std::uint64_t seed);

  const ActivationFileHeader& header() const { return header_; }
  std::size_t dim() const override { return header_.dim; }
  std::uint64_t size() const override { return header_.count; }

  ActivationBatch read_head(std::size_t n) override;
  void exclude_head(std::size_t n) override;
  void rewind(std::uint64_t pass_seed) override;
  bool next_batch(std::size_t max_rows, ActivationBatch& out) override;

 private:
  bool read_raw_row(std::vector<float>& row);
  void seek_row(std::uint64_t row);

  std::filesystem::path path_;
  std::ifstream file_;
  ActivationFileHeader header_;
  std::size_t shuffle_buffer_;
  std::uint64_t head_excluded_ = 0;
  std::uint64_t next_row_ = 0;
  Rng rng_;
  std::vector<std::vector<float>> buffer_;
  std::vector<std::uint64_t> buffer_ids_;
  bool draining_ = false;
};

// Convenience: ActivationStream over `path`.
ActivationStream open_stream(const std::filesystem::path& path, std::size_t shuffle_buffer, std::uint64_t seed);

// In-memory source. Each pass is a full Fisher-Yates shuffle when
// `shuffle` is set, file order otherwise.
class InMemorySource final : public ActivationSource {
 public:
  InMemorySource(ActivationBatch data, bool shuffle);

  std::size_t dim() const override { return data_.dim(); }
  std::uint64_t size() const override { return data_.size(); }
  ActivationBatch read_head(std::size_t n) override;
  void exclude_head(std::size_t n) override;
  void rewind(std::uint64_t pass_seed) override;
  bool next_batch(std::size_t max_rows, ActivationBatch& out) override;

 private:
  ActivationBatch data_;
  bool shuffle_;
  std::size_t head_excluded_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// "MFA1" model files
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 20;  // magic + version + K + d + R

// Canonical byte serialization of a model: exactly the model file contents.
std::vector<unsigned char> serialize_model(const MfaModel& model);
MfaModel deserialize_model(std::span<const unsigned char> bytes);

// Lower-case hex SHA-256 of serialize_model(model).
std::string model_fingerprint(const MfaModel& model);

// Writes atomically (temp file + rename) so failures never leave a partial
// model behind.
void save_model(const std::filesystem::path& path, const MfaModel& model);

struct LoadedModel {
  MfaModel model;
  std::string fingerprint;
};
LoadedModel load_model(const std::filesystem::path& path);

// Writes `contents` atomically.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> contents);
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mfa
