#pragma once

#include <string>

#include "him/config.hpp"
#include "him/optimizer.hpp"

namespace him {

// Binary checkpoint: magic, JSON header (config, step, parameter manifest),
// then raw little-endian doubles for parameters and optimizer moments.
// Round-trips bit-exactly.

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const nn::ParamSet& params, const AdamW* opt,
                     int64_t step);

struct CheckpointInfo {
  RunConfig config;
  int64_t step = 0;
  bool has_optimizer = false;
};

// Reads only the header; used to rebuild the model before loading weights.
CheckpointInfo peek_checkpoint(const std::string& path);

// Loads parameter values (and optimizer state when opt != nullptr) into an
// already-built ParamSet. Name/shape mismatches throw ConfigError; corrupt
// or unreadable files throw IoError.
CheckpointInfo load_checkpoint(const std::string& path, nn::ParamSet& params,
                               AdamW* opt);

}  // namespace him
