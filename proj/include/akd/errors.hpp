#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace akd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document (JSON, FIMI, rational literal, item string).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input parses but breaks a domain invariant (duplicate, unknown name, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class UnknownPropertyError : public ValidationError {
 public:
  explicit UnknownPropertyError(std::string name)
      : ValidationError("unknown property '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class CycleError : public ValidationError {
 public:
  explicit CycleError(std::vector<std::string> cycle)
      : ValidationError("entailment cycle: " + render(cycle)), cycle_(std::move(cycle)) {}
  // First node repeated at the end, e.g. {a, b, a}.
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  static std::string render(const std::vector<std::string>& cycle) {
    std::string out;
    for (std::size_t i = 0; i < cycle.size(); ++i) {
      if (i) out += "->";
      out += cycle[i];
    }
    return out;
  }
  std::vector<std::string> cycle_;
};

// Resource guard tripped: brute-force universe too large, transaction cap,
// FCI count cap.
class GuardError : public Error {
 public:
  using Error::Error;
};

// Transaction materialization cap exceeded; the database can still be streamed.
class TransactionCapError : public GuardError {
 public:
  using GuardError::GuardError;
};

class StaleSequenceError : public Error {
 public:
  using Error::Error;
};

class TransitionError : public Error {
 public:
  using Error::Error;
};

class ReplayError : public Error {
 public:
  ReplayError(std::int64_t rule_id, const std::string& what)
      : Error("event replay diverges at rule " + std::to_string(rule_id) + ": " + what),
        rule_id_(rule_id) {}
  std::int64_t rule_id() const noexcept { return rule_id_; }

 private:
  std::int64_t rule_id_;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace akd
