#pragma once

#include <string>
#include <vector>

#include "ecgi/adam.hpp"
#include "ecgi/tensor.hpp"

namespace ecgi {

// Binary parameter container: magic "ECGI", version u32, tensor count u32,
// then per tensor: name length u32 + UTF-8 name, rank u32, one u32 per dim,
// payload as little-endian f64 in row-major order.

std::string serialize_checkpoint(const std::vector<Param>& tensors);
std::vector<Param> deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::vector<Param>& tensors, const std::string& path);
std::vector<Param> load_checkpoint(const std::string& path);

// Copies values from `loaded` into `dst` by name; every destination
// parameter must be matched exactly once and shapes must agree.
void restore_params(std::vector<Param>& dst, const std::vector<Param>& loaded);

// Returns the entry with the given name or throws FormatError.
const Param& find_param(const std::vector<Param>& tensors, const std::string& name);

}  // namespace ecgi
