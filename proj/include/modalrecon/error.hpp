#pragma once

#include <stdexcept>
#include <string>

namespace modalrecon {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: violated precondition, inconsistent arguments, malformed file.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The computation itself failed (unobservable subspace, blow-up).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnobservableError : public NumericalError {
 public:
  UnobservableError(const std::string& what, double min_eig, double max_eig)
      : NumericalError(what), min_eig_(min_eig), max_eig_(max_eig) {}
  double min_eig() const noexcept { return min_eig_; }
  double max_eig() const noexcept { return max_eig_; }

 private:
  double min_eig_;
  double max_eig_;
};

class BlowUpError : public NumericalError {
 public:
  BlowUpError(const std::string& what, double time)
      : NumericalError(what), time_(time) {}
  /// Time of the first step whose norm exceeded the ceiling.
  double time() const noexcept { return time_; }

 private:
  double time_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace detail
}  // namespace modalrecon
