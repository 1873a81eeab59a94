#pragma once

#include <filesystem>

#include "sodkit/params.hpp"

namespace sodkit {

// Checkpoint file layout (documented here and in the README):
//   line 1: magic "SODKIT-CKPT v1"
//   line 2: one JSON object {"entries":[{"name","shape","trainable","count"},...]}
//   then, in manifest order, each entry's payload as count little-endian IEEE-754
//   64-bit floats, back to back, no padding.
// Entries are sorted by name (the ParamStore order), so save is deterministic.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);

// Loads into an existing store built from the same config. Any difference in
// the entry set or in a shape raises a ValidationError naming the first
// offending parameter.
void load_checkpoint(ParamStore& store, const std::filesystem::path& path);

}  // namespace sodkit
