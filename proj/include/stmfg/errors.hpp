#ifndef STMFG_ERRORS_HPP
#define STMFG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace stmfg {

/// Input files or datasets that do not conform to the expected format.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Operand shapes do not line up.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A computation produced NaN or Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

inline void require_dims(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

}  // namespace detail
}  // namespace stmfg

#endif  // STMFG_ERRORS_HPP
