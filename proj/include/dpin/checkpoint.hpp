#pragma once

#include <cstdint>
#include <string>

#include "dpin/tensor.hpp"

namespace dpin::ckpt {

// Binary checkpoint: named parameter tensors with shapes, stamped with the
// experiment-config hash. Loading refuses a mismatched hash.
void save(const nn::ParamSet& params, std::uint64_t config_hash,
          const std::string& path);
nn::ParamSet load(const std::string& path, std::uint64_t expected_hash);
std::uint64_t peek_hash(const std::string& path);

}  // namespace dpin::ckpt
