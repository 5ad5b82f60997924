#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cgpnas {

// Grid/rate/window combination cannot produce a valid genotype at all.
struct ConfigInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A mutation operator exhausted its retry budget without satisfying the
// active-node window (or, for forced mutation, without changing the
// phenotype).
struct MutationStuck : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownFunctionSet : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArityMismatch : std::logic_error {
  using std::logic_error::logic_error;
};

// Shape inference hit a node whose inputs cannot be combined; node_id is
// the graph node at fault.
struct InvalidArchitecture : std::runtime_error {
  int node_id;
  explicit InvalidArchitecture(int id, const std::string& what)
      : std::runtime_error(what), node_id(id) {}
};

struct OutOfMemoryBudget : std::runtime_error {
  std::int64_t required_bytes;
  std::int64_t budget_bytes;
  OutOfMemoryBudget(std::int64_t required, std::int64_t budget)
      : std::runtime_error("estimated " + std::to_string(required) +
                           " bytes exceeds budget of " + std::to_string(budget)),
        required_bytes(required),
        budget_bytes(budget) {}
};

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LabelOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct EpochOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct Diverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownSurrogate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorruptRecord : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested train/validation sizes do not fit in the source dataset.
struct InfeasibleSplit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorruptCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidLambda : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad key, bad value, or unreadable file in a run-configuration file.
struct ConfigParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cgpnas
