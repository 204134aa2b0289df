#pragma once

#include <iosfwd>
#include <string>

#include "pararank/ranker.hpp"

namespace pararank {

inline constexpr int kCheckpointVersion = 1;

/// Writes magic "PRCKPT", a little-endian u32 format version, a u64 header
/// length, a JSON header (tokenizer settings, vocabulary, encoder and scorer
/// hyperparameters, tensor table) and then every tensor as row-major
/// little-endian float64, embeddings first.
void checkpoint_save(RankerModel& model, std::ostream& out);
void checkpoint_save(RankerModel& model, const std::string& path);

/// Throws CheckpointError on a bad magic, version mismatch, corrupt header,
/// unknown scorer kind, inconsistent tensor shapes or truncated data.
RankerModel checkpoint_load(std::istream& in);
RankerModel checkpoint_load(const std::string& path);

}  // namespace pararank
