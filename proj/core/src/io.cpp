#include "mfa/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "mfa/error.hpp"

namespace mfa {
namespace {

constexpr char kActivationMagic[4] = {'M', 'F', 'A', 'A'};
constexpr char kModelMagic[4] = {'M', 'F', 'A', '1'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  static_assert(std::is_integral_v<T>);
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  return static_cast<T>(u);
}

void put_f64(std::vector<unsigned char>& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

void to_little_endian_floats(std::span<float> values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (float& f : values) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = (u >> 24) | ((u >> 8) & 0xFF00u) | ((u << 8) & 0xFF0000u) | (u << 24);
      f = std::bit_cast<float>(u);
    }
  }
}

std::string path_str(const std::filesystem::path& p) { return p.string(); }

std::uint64_t file_size_or_throw(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path_str(path) + ": " + ec.message());
  return size;
}

ActivationFileHeader parse_activation_header(const unsigned char* p, std::uint64_t file_size) {
  if (std::memcmp(p, kActivationMagic, 4) != 0) throw FormatError("bad activation file magic", 0);
  ActivationFileHeader h;
  h.version = get_le<std::uint32_t>(p + 4);
  if (h.version != kActivationFormatVersion) {
    throw FormatError("unsupported activation format version " + std::to_string(h.version), 4);
  }
  h.dim = get_le<std::uint32_t>(p + 8);
  if (h.dim == 0) throw FormatError("activation dimension must be positive", 8);
  h.dtype = p[12];
  if (h.dtype != 0) throw FormatError("unsupported activation dtype " + std::to_string(h.dtype), 12);
  h.count = get_le<std::uint64_t>(p + 13);
  const std::uint64_t expected = kActivationHeaderBytes + h.count * h.dim * sizeof(float);
  if (file_size < expected) {
    throw FormatError("truncated activation payload: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(file_size),
                      file_size);
  }
  if (file_size > expected) {
    throw FormatError("activation file has " + std::to_string(file_size - expected) + " trailing bytes", expected);
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// ActivationBatch

ActivationBatch::ActivationBatch(std::size_t dim, std::vector<float> values, std::vector<std::uint64_t> ids)
    : dim_(dim), values_(std::move(values)), ids_(std::move(ids)) {
  if (dim_ == 0) throw InvalidInputError("activation batch dimension must be positive");
  if (values_.size() % dim_ != 0) throw InvalidInputError("activation values are not rectangular");
  if (!ids_.empty() && ids_.size() != size()) throw InvalidInputError("identifier count does not match rows");
}

ActivationBatch ActivationBatch::from_rows(const std::vector<Eigen::VectorXd>& rows) {
  if (rows.empty()) throw InvalidInputError("cannot infer dimension from zero rows");
  ActivationBatch b(static_cast<std::size_t>(rows.front().size()));
  b.reserve(rows.size());
  for (const auto& r : rows) b.append(r);
  return b;
}

ActivationBatch ActivationBatch::from_matrix(const Eigen::MatrixXd& rows) {
  ActivationBatch b(static_cast<std::size_t>(rows.cols()));
  b.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) b.append(Eigen::VectorXd(rows.row(i).transpose()));
  return b;
}

Eigen::VectorXd ActivationBatch::row(std::size_t i) const {
  if (i >= size()) throw InvalidInputError("row index out of range");
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
  const float* p = values_.data() + i * dim_;
  for (std::size_t j = 0; j < dim_; ++j) v(static_cast<Eigen::Index>(j)) = static_cast<double>(p[j]);
  return v;
}

void ActivationBatch::append(std::span<const float> row, std::optional<std::uint64_t> id) {
  if (row.size() != dim_) {
    throw InvalidInputError("row has dimension " + std::to_string(row.size()) + ", expected " + std::to_string(dim_));
  }
  if (id.has_value() != has_ids() && !empty()) {
    throw InvalidInputError("cannot mix rows with and without identifiers");
  }
  values_.insert(values_.end(), row.begin(), row.end());
  if (id) ids_.push_back(*id);
}

void ActivationBatch::append(const Eigen::VectorXd& row, std::optional<std::uint64_t> id) {
  std::vector<float> tmp(static_cast<std::size_t>(row.size()));
  for (Eigen::Index j = 0; j < row.size(); ++j) tmp[static_cast<std::size_t>(j)] = static_cast<float>(row(j));
  append(std::span<const float>(tmp), id);
}

// ---------------------------------------------------------------------------
// Activation files

void write_activations(const std::filesystem::path& path, const ActivationBatch& batch) {
  if (batch.dim() == 0) throw InvalidInputError("activation batch dimension must be positive");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (float v : batch.row_span(i)) {
      if (!std::isfinite(v)) throw InvalidInputError("row " + std::to_string(i) + " contains non-finite values");
    }
  }
  std::vector<unsigned char> header;
  header.insert(header.end(), kActivationMagic, kActivationMagic + 4);
  put_le<std::uint32_t>(header, kActivationFormatVersion);
  put_le<std::uint32_t>(header, static_cast<std::uint32_t>(batch.dim()));
  header.push_back(0);
  put_le<std::uint64_t>(header, batch.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path_str(path) + " for writing");
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  std::vector<float> payload = batch.values();
  to_little_endian_floats(payload);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path_str(path));
}

ActivationFileHeader read_activation_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path_str(path));
  const auto size = file_size_or_throw(path);
  unsigned char buf[kActivationHeaderBytes];
  in.read(reinterpret_cast<char*>(buf), sizeof(buf));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(buf))) {
    throw FormatError("truncated activation header", static_cast<std::uint64_t>(in.gcount()));
  }
  return parse_activation_header(buf, size);
}

ActivationBatch read_activations(const std::filesystem::path& path) {
  ActivationStream stream(path, 0, 0);
  ActivationBatch all(stream.dim());
  stream.rewind(0);
  ActivationBatch chunk;
  while (stream.next_batch(4096, chunk)) {
    for (std::size_t i = 0; i < chunk.size(); ++i) all.append(chunk.row_span(i), chunk.id(i));
  }
  return all;
}

// ---------------------------------------------------------------------------
// ActivationStream

ActivationStream::ActivationStream(const std::filesystem::path& path, std::size_t shuffle_buffer, std::uint64_t seed)
    : path_(path), header_(read_activation_header(path)), shuffle_buffer_(shuffle_buffer), rng_(seed) {
  file_.open(path, std::ios::binary);
  if (!file_) throw IoError("cannot open " + path_str(path));
  rewind(seed);
}

void ActivationStream::seek_row(std::uint64_t row) {
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(kActivationHeaderBytes + row * header_.dim * sizeof(float)));
  if (!file_) throw IoError("seek failed in " + path_str(path_));
}

bool ActivationStream::read_raw_row(std::vector<float>& row) {
  if (next_row_ >= header_.count) return false;
  row.resize(header_.dim);
  file_.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(header_.dim * sizeof(float)));
  if (!file_) {
    throw FormatError("unexpected end of activation payload",
                      kActivationHeaderBytes + next_row_ * header_.dim * sizeof(float));
  }
  to_little_endian_floats(row);
  ++next_row_;
  return true;
}

ActivationBatch ActivationStream::read_head(std::size_t n) {
  const auto rows = static_cast<std::size_t>(std::min<std::uint64_t>(n, header_.count));
  ActivationBatch out(header_.dim);
  out.reserve(rows);
  const auto saved = next_row_;
  next_row_ = 0;
  seek_row(0);
  std::vector<float> row;
  for (std::size_t i = 0; i < rows && read_raw_row(row); ++i) out.append(std::span<const float>(row), i);
  next_row_ = saved;
  seek_row(next_row_);
  return out;
}

void ActivationStream::exclude_head(std::size_t n) {
  head_excluded_ = std::min<std::uint64_t>(n, header_.count);
}

void ActivationStream::rewind(std::uint64_t pass_seed) {
  rng_.seed(pass_seed);
  next_row_ = head_excluded_;
  seek_row(next_row_);
  buffer_.clear();
  buffer_ids_.clear();
}

bool ActivationStream::next_batch(std::size_t max_rows, ActivationBatch& out) {
  out = ActivationBatch(header_.dim);
  if (max_rows == 0) throw InvalidInputError("batch size must be positive");
  out.reserve(max_rows);
  std::vector<float> row;
  while (out.size() < max_rows) {
    if (shuffle_buffer_ == 0) {
      const auto id = next_row_;
      if (!read_raw_row(row)) break;
      out.append(std::span<const float>(row), id);
      continue;
    }
    while (buffer_.size() < shuffle_buffer_) {
      const auto id = next_row_;
      if (!read_raw_row(row)) break;
      buffer_.push_back(row);
      buffer_ids_.push_back(id);
    }
    if (buffer_.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
    const std::size_t j = pick(rng_);
    out.append(std::span<const float>(buffer_[j]), buffer_ids_[j]);
    const auto id = next_row_;
    if (read_raw_row(row)) {
      buffer_[j] = row;
      buffer_ids_[j] = id;
    } else {
      std::swap(buffer_[j], buffer_.back());
      std::swap(buffer_ids_[j], buffer_ids_.back());
      buffer_.pop_back();
      buffer_ids_.pop_back();
    }
  }
  return !out.empty();
}

ActivationStream open_stream(const std::filesystem::path& path, std::size_t shuffle_buffer, std::uint64_t seed) {
  return ActivationStream(path, shuffle_buffer, seed);
}

// ---------------------------------------------------------------------------
// InMemorySource

InMemorySource::InMemorySource(ActivationBatch data, bool shuffle) : data_(std::move(data)), shuffle_(shuffle) {
  rewind(0);
}

ActivationBatch InMemorySource::read_head(std::size_t n) {
  ActivationBatch out(data_.dim());
  const std::size_t rows = std::min(n, data_.size());
  for (std::size_t i = 0; i < rows; ++i) out.append(data_.row_span(i), data_.id(i));
  return out;
}

void InMemorySource::exclude_head(std::size_t n) { head_excluded_ = std::min(n, data_.size()); }

void InMemorySource::rewind(std::uint64_t pass_seed) {
  order_.resize(data_.size() - head_excluded_);
  std::iota(order_.begin(), order_.end(), head_excluded_);
  if (shuffle_) {
    Rng rng(pass_seed);
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order_[i - 1], order_[pick(rng)]);
    }
  }
  cursor_ = 0;
}

bool InMemorySource::next_batch(std::size_t max_rows, ActivationBatch& out) {
  if (max_rows == 0) throw InvalidInputError("batch size must be positive");
  out = ActivationBatch(data_.dim());
  out.reserve(max_rows);
  for (; cursor_ < order_.size() && out.size() < max_rows; ++cursor_) {
    out.append(data_.row_span(order_[cursor_]), data_.id(order_[cursor_]));
  }
  return !out.empty();
}

// ---------------------------------------------------------------------------
// Model files

std::vector<unsigned char> serialize_model(const MfaModel& model) {
  const auto& p = model.parameters();
  const std::size_t k = model.num_components(), d = model.dim(), r = model.rank();
  std::vector<unsigned char> out;
  out.reserve(kModelHeaderBytes + 8 * (k + d + k * d + k * d * r));
  out.insert(out.end(), kModelMagic, kModelMagic + 4);
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(k));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r));
  for (Eigen::Index i = 0; i < p.pi_logits.size(); ++i) put_f64(out, p.pi_logits(i));
  for (Eigen::Index i = 0; i < p.psi_raw.size(); ++i) put_f64(out, p.psi_raw(i));
  for (Eigen::Index c = 0; c < p.means.rows(); ++c)
    for (Eigen::Index j = 0; j < p.means.cols(); ++j) put_f64(out, p.means(c, j));
  for (const auto& w : p.loadings)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) put_f64(out, w(i, j));
  return out;
}

MfaModel deserialize_model(std::span<const unsigned char> bytes) {
  if (bytes.size() < kModelHeaderBytes) throw FormatError("truncated model header", bytes.size());
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw FormatError("bad model file magic", 0);
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version), 4);
  }
  const std::uint64_t k = get_le<std::uint32_t>(bytes.data() + 8);
  const std::uint64_t d = get_le<std::uint32_t>(bytes.data() + 12);
  const std::uint64_t r = get_le<std::uint32_t>(bytes.data() + 16);
  if (k == 0 || d == 0 || r == 0 || r > d) throw FormatError("invalid model shape", 8);
  const std::uint64_t expected = kModelHeaderBytes + 8 * (k + d + k * d + k * d * r);
  if (bytes.size() != expected) {
    throw FormatError("model payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected),
                      std::min<std::uint64_t>(bytes.size(), expected));
  }
  const unsigned char* p = bytes.data() + kModelHeaderBytes;
  auto next = [&p] {
    const double v = get_f64(p);
    p += 8;
    return v;
  };
  const auto K = static_cast<Eigen::Index>(k), D = static_cast<Eigen::Index>(d), R = static_cast<Eigen::Index>(r);
  MfaParameters params;
  params.pi_logits.resize(K);
  for (Eigen::Index i = 0; i < K; ++i) params.pi_logits(i) = next();
  params.psi_raw.resize(D);
  for (Eigen::Index i = 0; i < D; ++i) params.psi_raw(i) = next();
  params.means.resize(K, D);
  for (Eigen::Index c = 0; c < K; ++c)
    for (Eigen::Index j = 0; j < D; ++j) params.means(c, j) = next();
  params.loadings.assign(static_cast<std::size_t>(k), Eigen::MatrixXd(D, R));
  for (auto& w : params.loadings)
    for (Eigen::Index i = 0; i < D; ++i)
      for (Eigen::Index j = 0; j < R; ++j) w(i, j) = next();
  return MfaModel(std::move(params));
}

std::string model_fingerprint(const MfaModel& model) {
  const auto bytes = serialize_model(model);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path_str(tmp) + " for writing");
    out.write(reinterpret_cast<const char*>(contents.data()), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      std::filesystem::remove(tmp);
      throw IoError("write failed for " + path_str(tmp));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move " + path_str(tmp) + " to " + path_str(path) + ": " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  write_file_atomic(path, std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(contents.data()),
                                                         contents.size()));
}

void save_model(const std::filesystem::path& path, const MfaModel& model) {
  write_file_atomic(path, serialize_model(model));
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path_str(path));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  MfaModel model = deserialize_model(bytes);
  std::string fp = model_fingerprint(model);
  return {std::move(model), std::move(fp)};
}

}  // namespace mfa
