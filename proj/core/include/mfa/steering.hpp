#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfa/mixture.hpp"

namespace mfa {

enum class SteeringKind { kCentroidInterpolation, kLoadingOffset };

std::string to_string(SteeringKind kind);
SteeringKind steering_kind_from_string(const std::string& name);

// Intervention parameters for one component. Vectors are stored as 32-bit
// floats, the precision of the exported file.
//
//   centroid-interpolation: x -> (1 - alpha) x + alpha mu   (alpha, mu)
//   loading-offset:         x -> x + W v                    (v, W)
struct SteeringSpec {
  SteeringKind kind = SteeringKind::kCentroidInterpolation;
  std::size_t component = 0;
  std::size_t dim = 0;
  std::size_t rank = 0;
  std::optional<double> alpha;  // centroid kind only
  std::vector<float> mu;        // d, centroid kind only
  std::vector<float> loadings;  // d x R row-major, loading kind only
  std::vector<float> v;         // R, loading kind only
  std::string fingerprint;      // hex SHA-256 of the source model

  bool operator==(const SteeringSpec&) const = default;

  // Throws InvalidInputError if the populated fields do not match `kind`.
  void validate() const;
};

SteeringSpec make_centroid_spec(const MfaModel& model, std::size_t component, double alpha);
SteeringSpec make_loading_spec(const MfaModel& model, std::size_t component, const Eigen::VectorXd& v);

Eigen::VectorXd apply_centroid(const Eigen::VectorXd& x, const SteeringSpec& spec);
Eigen::VectorXd apply_loading(const Eigen::VectorXd& x, const SteeringSpec& spec);
// Dispatches on spec.kind.
Eigen::VectorXd apply_steering(const Eigen::VectorXd& x, const SteeringSpec& spec);

// Text form: a header line
//   <kind> <component> <d> <R> <alpha|-> <fingerprint>
// followed by "mu", "W" and/or "v" lines, each a base64 block of
// little-endian float32 values.
std::string format_spec(const SteeringSpec& spec);
SteeringSpec parse_spec(const std::string& text);

// Rejects specs whose fingerprint differs from `model`'s.
void export_spec(const MfaModel& model, const SteeringSpec& spec, const std::filesystem::path& path);
SteeringSpec load_spec(const std::filesystem::path& path);
SteeringSpec load_spec(const std::filesystem::path& path, const MfaModel& model);

}  // namespace mfa
