#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedmm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative inner solver stopped before reaching its tolerance.
class SolverDivergence : public Error {
 public:
  SolverDivergence(const std::string& what, std::size_t iterations, double residual)
      : Error(what + " (iterations=" + std::to_string(iterations) +
              ", residual=" + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

/// A NaN or Inf showed up in an iterate.
class NumericOverflow : public Error {
 public:
  NumericOverflow(const std::string& what, std::size_t round)
      : Error(what + " at round " + std::to_string(round)), round_(round) {}

  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

/// Input outside the domain of a map (e.g. non-PSD block passed to T).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration; the message carries the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace fedmm
