#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dcies {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class ZeroVarianceColumn : public Error {
 public:
  explicit ZeroVarianceColumn(std::size_t index)
      : Error("code column " + std::to_string(index) + " has zero variance on the train split"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class InvalidImportance : public Error {
 public:
  InvalidImportance(std::size_t column, double sum)
      : Error("importance column " + std::to_string(column) + " sums to " + std::to_string(sum)),
        column_(column),
        sum_(sum) {}
  std::size_t column() const { return column_; }
  double sum() const { return sum_; }

 private:
  std::size_t column_;
  double sum_;
};

class NegativeImportance : public Error {
 public:
  NegativeImportance(std::size_t row, std::size_t column)
      : Error("negative importance at (" + std::to_string(row) + ", " + std::to_string(column) + ")"),
        row_(row),
        column_(column) {}
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class ZeroColumn : public Error {
 public:
  explicit ZeroColumn(std::size_t column)
      : Error("weight column " + std::to_string(column) + " is identically zero"), column_(column) {}
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class EmptySplit : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class MaskingUnsupported : public Error {
 public:
  using Error::Error;
};

class DegenerateBaseline : public Error {
 public:
  using Error::Error;
};

class SingularMixing : public Error {
 public:
  using Error::Error;
};

class NotAnalytic : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A probe fit failed; carries the (factor, capacity) task that failed.
class ProbeFitError : public Error {
 public:
  ProbeFitError(std::size_t factor, std::size_t capacity_index, const std::string& what)
      : Error("factor " + std::to_string(factor) + ", capacity " + std::to_string(capacity_index) + ": " + what),
        factor_(factor),
        capacity_index_(capacity_index) {}
  std::size_t factor() const { return factor_; }
  std::size_t capacity_index() const { return capacity_index_; }

 private:
  std::size_t factor_;
  std::size_t capacity_index_;
};

}  // namespace dcies
