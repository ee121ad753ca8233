#pragma once

#include <string>
#include <vector>

#include "tan/matrix.hpp"

namespace tanet {

struct NamedMatrix {
    std::string name;
    Matrix value;
};

// Binary little-endian checkpoint: the 8 bytes "TANCKPT1", then one record
// per tensor until end of file:
//   u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (row-major).
void save_checkpoint(const std::string& path, const std::vector<NamedMatrix>& tensors);
std::vector<NamedMatrix> load_checkpoint(const std::string& path);

}  // namespace tanet
