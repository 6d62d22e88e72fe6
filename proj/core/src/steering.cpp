#include "mfa/steering.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mfa/error.hpp"
#include "mfa/io.hpp"

namespace mfa {
namespace {

std::vector<float> to_floats(const Eigen::VectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  return out;
}

Eigen::VectorXd to_vector(const std::vector<float>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = static_cast<double>(v[i]);
  return out;
}

std::string encode_floats(const std::vector<float>& values) {
  std::vector<unsigned char> raw;
  raw.reserve(values.size() * 4);
  for (float f : values) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) raw.push_back(static_cast<unsigned char>((u >> (8 * b)) & 0xFF));
  }
  std::string out(4 * ((raw.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), raw.data(), static_cast<int>(raw.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<float> decode_floats(const std::string& text, std::size_t expected) {
  if (text.size() % 4 != 0) throw FormatError("base64 block length is not a multiple of 4", 0);
  std::vector<unsigned char> raw(3 * text.size() / 4 + 3);
  const int n = EVP_DecodeBlock(raw.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw FormatError("invalid base64 block", 0);
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  const std::size_t bytes = static_cast<std::size_t>(n) - padding;
  if (bytes != expected * 4) {
    throw FormatError("float block holds " + std::to_string(bytes) + " bytes, expected " +
                          std::to_string(expected * 4),
                      0);
  }
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(raw[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

void check_component(const MfaModel& model, std::size_t component) {
  if (component >= model.num_components()) {
    throw InvalidInputError("component " + std::to_string(component) + " out of range");
  }
}

void check_dim(const Eigen::VectorXd& x, const SteeringSpec& spec) {
  if (static_cast<std::size_t>(x.size()) != spec.dim) {
    throw InvalidInputError("input has dimension " + std::to_string(x.size()) + ", spec expects " +
                            std::to_string(spec.dim));
  }
}

}  // namespace

std::string to_string(SteeringKind kind) {
  return kind == SteeringKind::kCentroidInterpolation ? "centroid-interpolation" : "loading-offset";
}

SteeringKind steering_kind_from_string(const std::string& name) {
  if (name == "centroid-interpolation" || name == "centroid") return SteeringKind::kCentroidInterpolation;
  if (name == "loading-offset" || name == "loading") return SteeringKind::kLoadingOffset;
  throw InvalidInputError("unknown steering kind '" + name + "'");
}

void SteeringSpec::validate() const {
  if (dim < 1 || rank < 1) throw InvalidInputError("steering spec needs d >= 1 and R >= 1");
  if (kind == SteeringKind::kCentroidInterpolation) {
    if (!alpha || !(*alpha >= 0.0 && *alpha <= 1.0)) throw InvalidInputError("alpha must lie in [0, 1]");
    if (mu.size() != dim) throw InvalidInputError("centroid spec must carry mu of length d");
    if (!loadings.empty() || !v.empty()) throw InvalidInputError("centroid spec must not carry W or v");
  } else {
    if (alpha) throw InvalidInputError("loading spec must not carry alpha");
    if (v.size() != rank || loadings.size() != dim * rank) {
      throw InvalidInputError("loading spec must carry v of length R and W of size d x R");
    }
    if (!mu.empty()) throw InvalidInputError("loading spec must not carry mu");
  }
}

SteeringSpec make_centroid_spec(const MfaModel& model, std::size_t component, double alpha) {
  check_component(model, component);
  SteeringSpec s;
  s.kind = SteeringKind::kCentroidInterpolation;
  s.component = component;
  s.dim = model.dim();
  s.rank = model.rank();
  s.alpha = alpha;
  s.mu = to_floats(model.mean(component));
  s.fingerprint = model_fingerprint(model);
  s.validate();
  return s;
}

SteeringSpec make_loading_spec(const MfaModel& model, std::size_t component, const Eigen::VectorXd& v) {
  check_component(model, component);
  if (static_cast<std::size_t>(v.size()) != model.rank()) {
    throw InvalidInputError("latent offset has length " + std::to_string(v.size()) + ", expected R=" +
                            std::to_string(model.rank()));
  }
  SteeringSpec s;
  s.kind = SteeringKind::kLoadingOffset;
  s.component = component;
  s.dim = model.dim();
  s.rank = model.rank();
  s.v = to_floats(v);
  const Eigen::MatrixXd& w = model.loadings(component);
  s.loadings.reserve(s.dim * s.rank);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) s.loadings.push_back(static_cast<float>(w(i, j)));
  s.fingerprint = model_fingerprint(model);
  s.validate();
  return s;
}

Eigen::VectorXd apply_centroid(const Eigen::VectorXd& x, const SteeringSpec& spec) {
  if (spec.kind != SteeringKind::kCentroidInterpolation) {
    throw InvalidInputError("apply_centroid needs a centroid-interpolation spec");
  }
  spec.validate();
  check_dim(x, spec);
  const double a = *spec.alpha;
  return (1.0 - a) * x + a * to_vector(spec.mu);
}

Eigen::VectorXd apply_loading(const Eigen::VectorXd& x, const SteeringSpec& spec) {
  if (spec.kind != SteeringKind::kLoadingOffset) throw InvalidInputError("apply_loading needs a loading-offset spec");
  spec.validate();
  check_dim(x, spec);
  Eigen::VectorXd out = x;
  for (std::size_t i = 0; i < spec.dim; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < spec.rank; ++j) {
      s += static_cast<double>(spec.loadings[i * spec.rank + j]) * static_cast<double>(spec.v[j]);
    }
    out(static_cast<Eigen::Index>(i)) += s;
  }
  return out;
}

Eigen::VectorXd apply_steering(const Eigen::VectorXd& x, const SteeringSpec& spec) {
  return spec.kind == SteeringKind::kCentroidInterpolation ? apply_centroid(x, spec) : apply_loading(x, spec);
}

std::string format_spec(const SteeringSpec& spec) {
  spec.validate();
  std::ostringstream os;
  os << to_string(spec.kind) << ' ' << spec.component << ' ' << spec.dim << ' ' << spec.rank << ' ';
  if (spec.alpha) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", *spec.alpha);
    os << buf;
  } else {
    os << '-';
  }
  os << ' ' << spec.fingerprint << '\n';
  if (spec.kind == SteeringKind::kCentroidInterpolation) {
    os << "mu " << encode_floats(spec.mu) << '\n';
  } else {
    os << "W " << encode_floats(spec.loadings) << '\n';
    os << "v " << encode_floats(spec.v) << '\n';
  }
  return os.str();
}

SteeringSpec parse_spec(const std::string& text) {
  std::istringstream is(text);
  std::string header;
  if (!std::getline(is, header)) throw FormatError("empty steering spec", 0);
  std::istringstream hs(header);
  std::string kind, alpha;
  SteeringSpec s;
  if (!(hs >> kind >> s.component >> s.dim >> s.rank >> alpha >> s.fingerprint)) {
    throw FormatError("malformed steering spec header", 0);
  }
  s.kind = steering_kind_from_string(kind);
  if (alpha != "-") {
    try {
      std::size_t used = 0;
      s.alpha = std::stod(alpha, &used);
      if (used != alpha.size()) throw std::invalid_argument(alpha);
    } catch (const std::exception&) {
      throw FormatError("malformed alpha '" + alpha + "'", 0);
    }
  }
  std::uint64_t offset = header.size() + 1;
  std::string line;
  while (std::getline(is, line)) {
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw FormatError("malformed steering block", line_offset);
    const std::string tag = line.substr(0, space), body = line.substr(space + 1);
    try {
      if (tag == "mu") {
        s.mu = decode_floats(body, s.dim);
      } else if (tag == "W") {
        s.loadings = decode_floats(body, s.dim * s.rank);
      } else if (tag == "v") {
        s.v = decode_floats(body, s.rank);
      } else {
        throw FormatError("unknown steering block '" + tag + "'", line_offset);
      }
    } catch (const FormatError& e) {
      if (e.offset() != 0) throw;
      throw FormatError(std::string("bad '") + tag + "' block: " + e.what(), line_offset);
    }
  }
  try {
    s.validate();
  } catch (const InvalidInputError& e) {
    throw FormatError(std::string("inconsistent steering spec: ") + e.what(), 0);
  }
  return s;
}

void export_spec(const MfaModel& model, const SteeringSpec& spec, const std::filesystem::path& path) {
  if (spec.fingerprint != model_fingerprint(model)) {
    throw ModelMismatchError("steering spec fingerprint does not match the model");
  }
  if (spec.dim != model.dim() || spec.rank != model.rank() || spec.component >= model.num_components()) {
    throw ModelMismatchError("steering spec shape does not match the model");
  }
  write_file_atomic(path, format_spec(spec));
}

SteeringSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

SteeringSpec load_spec(const std::filesystem::path& path, const MfaModel& model) {
  SteeringSpec s = load_spec(path);
  if (s.fingerprint != model_fingerprint(model)) {
    throw ModelMismatchError("steering spec " + path.string() + " was exported from a different model");
  }
  return s;
}

}  // namespace mfa
