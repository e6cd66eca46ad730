#pragma once

#include <stdexcept>
#include <string>

namespace bsp {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The requested offspring law cannot be built with nonnegative masses.
class InfeasibleDistribution : public Error {
 public:
  InfeasibleDistribution(const std::string& what, double offending_mass)
      : Error(what), offending_mass_(offending_mass) {}
  double offending_mass() const { return offending_mass_; }

 private:
  double offending_mass_;
};

/// No asymptotic prediction exists for the (motion, offspring) pair.
class UnsupportedRegime : public Error {
 public:
  using Error::Error;
};

/// Not enough usable data (e.g. fit window too small).
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace bsp
