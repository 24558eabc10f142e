#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace tabemb {

// Dense types, templated on scalar. All training math runs in f64; f32 is
// used only at storage boundaries (embedding cache, graph pools).
template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using FloatMatrix = MatrixX<float>;
using FloatVector = VectorX<float>;

enum class Task { Cta, Cpa, Tta };

inline constexpr int kNumTasks = 3;

std::string to_string(Task task);
Task task_from_string(const std::string& name);

// Raised for malformed inputs, bad arguments, and configuration mistakes.
// The CLI maps these to exit code 2; plain std::runtime_error maps to 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parse failure in an input file; the message names the file and line.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace tabemb
