#pragma once

namespace cgpnas {

inline constexpr const char* kVersion = "0.1.0";

// Format tags embedded in serialized artifacts. Readers reject anything
// whose tag they do not recognize instead of guessing.
inline constexpr const char* kGenotypeFormat = "cgpnas-genotype/1";
inline constexpr const char* kCheckpointFormat = "cgpnas-checkpoint/1";
inline constexpr const char* kGraphSchema = "cgpnas-graph/1";
inline constexpr const char* kDatasetFormat = "cgpnas-dataset/1";
inline constexpr const char* kWeightsMagic = "CGPNASW1";

}  // namespace cgpnas
