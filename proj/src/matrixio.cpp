#include "seqcomp/matrixio.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "seqcomp/error.hpp"

namespace seqcomp::richness {

void write_matrix(std::ostream& os, const num::Tensor& m) {
    const int rows = m.rows(), cols = m.cols();
    os << rows << " " << cols << "\n";
    char buf[40];
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.values[static_cast<size_t>(i) * cols + j]);
            os << (j ? " " : "") << buf;
        }
        os << "\n";
    }
}

void write_matrix_file(const std::string& path, const num::Tensor& m) {
    std::ofstream os(path);
    if (!os) throw ParseError("cannot open for writing: " + path);
    write_matrix(os, m);
}

num::Tensor read_matrix(std::istream& is) {
    int rows = 0, cols = 0;
    if (!(is >> rows >> cols) || rows < 0 || cols < 0)
        throw ParseError("matrix container: malformed header");
    num::Tensor m = num::Tensor::zeros({rows, cols});
    for (auto& v : m.values)
        if (!(is >> v)) throw ParseError("matrix container: truncated value section");
    return m;
}

num::Tensor read_matrix_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open matrix file: " + path);
    return read_matrix(is);
}

}  // namespace seqcomp::richness
