#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loadshed {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector lengths that disagree with the network dimensions.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& what, std::size_t expected, std::size_t got)
      : Error(what + ": expected length " + std::to_string(expected) + ", got " +
              std::to_string(got)),
        expected_(expected),
        got_(got) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t got() const noexcept { return got_; }

 private:
  std::size_t expected_;
  std::size_t got_;
};

// Malformed case file. line() is 1-based, 0 when the error has no location.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Network data that violates a modelling invariant (bad reactance, unbalanced
// injections, a rebalance that cannot be carried out, ...).
class NetworkError : public Error {
 public:
  using Error::Error;
};

// A constraint set that is empty, e.g. a box whose sums exclude 1'z = 0.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// An iterative routine hit its iteration cap before meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations)
      : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
        iterations_(iterations) {}

  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

// The PALM objective increased between two feasible iterates.
class DescentError : public Error {
 public:
  DescentError(const std::string& what, std::size_t iteration, double before, double after)
      : Error(what), iteration_(iteration), before_(before), after_(after) {}

  std::size_t iteration() const noexcept { return iteration_; }
  double before() const noexcept { return before_; }
  double after() const noexcept { return after_; }

 private:
  std::size_t iteration_;
  double before_;
  double after_;
};

}  // namespace loadshed
