#pragma once

#include <iosfwd>
#include <string>

#include "seqcomp/tensor.hpp"

namespace seqcomp::richness {

// Plain-text matrix container: a "rows cols" header line followed by
// whitespace-separated decimal values, 17 significant digits so doubles
// round-trip exactly.
void write_matrix(std::ostream& os, const num::Tensor& m);
void write_matrix_file(const std::string& path, const num::Tensor& m);
num::Tensor read_matrix(std::istream& is);
num::Tensor read_matrix_file(const std::string& path);

}  // namespace seqcomp::richness
