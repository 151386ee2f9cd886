#include "seqcomp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqcomp/error.hpp"

namespace seqcomp::num {

long long shape_product(const std::vector<int>& shape) {
    long long p = 1;
    for (int d : shape) p *= d;
    return p;
}

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
    if (shape_product(shape) != static_cast<long long>(values.size())) {
        throw ShapeError("tensor value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str());
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    t.values.assign(static_cast<size_t>(shape_product(shape)), 0.0);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double fill) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.values.begin(), t.values.end(), fill);
    return t;
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<double> vals) {
    return Tensor({rows, cols}, std::vector<double>(vals));
}

Tensor Tensor::vec(std::initializer_list<double> vals) {
    return Tensor({static_cast<int>(vals.size())}, std::vector<double>(vals));
}

Tensor Tensor::identity(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int Tensor::rows() const {
    if (shape.size() == 2) return shape[0];
    if (shape.size() == 1) return 1;
    throw ShapeError("rows() on tensor of rank " + std::to_string(shape.size()));
}

int Tensor::cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    throw ShapeError("cols() on tensor of rank " + std::to_string(shape.size()));
}

double& Tensor::at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

void Tensor::alloc_grad() { grad.assign(values.size(), 0.0); }
void Tensor::clear_grad() { grad.clear(); }

bool Tensor::all_finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ")";
    return os.str();
}

namespace {

void require_2d(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected a matrix, got " + t.shape_str());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " + b.shape_str());
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = a.values[static_cast<size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const double* brow = &b.values[static_cast<size_t>(p) * n];
            double* orow = &out.values[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    Tensor out = Tensor::zeros({a.cols(), a.rows()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(who) + ": shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] *= b.values[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (double& v : out.values) v *= c;
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_2d(x, "softmax_rows");
    Tensor out = x;
    const int n = x.cols();
    for (int i = 0; i < x.rows(); ++i) {
        double* row = &out.values[static_cast<size_t>(i) * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= sum;
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    require_2d(x, "layer_norm");
    const int n = x.cols();
    if (gamma.size() != n || beta.size() != n)
        throw ShapeError("layer_norm: gamma/beta length must equal column count " + std::to_string(n));
    Tensor out = x;
    for (int i = 0; i < x.rows(); ++i) {
        double* row = &out.values[static_cast<size_t>(i) * n];
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += row[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int j = 0; j < n; ++j) row[j] = (row[j] - mean) * inv * gamma.values[j] + beta.values[j];
    }
    return out;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad_scalar(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
    return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values) v = gelu_scalar(v);
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_rows");
    require_2d(b, "concat_rows");
    if (a.cols() != b.cols())
        throw ShapeError("concat_rows: width mismatch, " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros({a.rows() + b.rows(), a.cols()});
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + a.values.size());
    return out;
}

Tensor slice_rows(const Tensor& x, int row_begin, int row_end) {
    require_2d(x, "slice_rows");
    if (row_begin < 0 || row_end > x.rows() || row_begin >= row_end)
        throw ShapeError("slice_rows: invalid range [" + std::to_string(row_begin) + ", " +
                         std::to_string(row_end) + ") for " + x.shape_str());
    const int n = x.cols();
    Tensor out = Tensor::zeros({row_end - row_begin, n});
    std::copy(x.values.begin() + static_cast<size_t>(row_begin) * n,
              x.values.begin() + static_cast<size_t>(row_end) * n, out.values.begin());
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_cols");
    require_2d(b, "concat_cols");
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols: height mismatch, " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros({a.rows(), a.cols() + b.cols()});
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j);
        for (int j = 0; j < b.cols(); ++j) out.at(i, a.cols() + j) = b.at(i, j);
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
    if (shape_product(new_shape) != x.size())
        throw ShapeError("reshape: element count mismatch for " + x.shape_str());
    Tensor out = x;
    out.shape = std::move(new_shape);
    return out;
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
    require_2d(x, "add_row_broadcast");
    if (bias.size() != x.cols())
        throw ShapeError("add_row_broadcast: bias length " + std::to_string(bias.size()) +
                         " vs width " + std::to_string(x.cols()));
    Tensor out = x;
    const int n = x.cols();
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < n; ++j) out.values[static_cast<size_t>(i) * n + j] += bias.values[j];
    return out;
}

Tensor gather(const Tensor& x, const std::vector<int>& indices, std::vector<int> out_shape) {
    if (shape_product(out_shape) != static_cast<long long>(indices.size()))
        throw ShapeError("gather: index count does not match output shape");
    std::vector<double> vals(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) vals[i] = x.values[static_cast<size_t>(indices[i])];
    return Tensor(std::move(out_shape), std::move(vals));
}

Tensor normalize_rows(const Tensor& x) {
    require_2d(x, "normalize_rows");
    const int n = x.cols();
    Tensor out = x;
    for (int i = 0; i < x.rows(); ++i) {
        double* row = &out.values[static_cast<size_t>(i) * n];
        double sq = 0.0;
        for (int j = 0; j < n; ++j) sq += row[j] * row[j];
        const double norm = std::sqrt(sq);
        if (norm < 1e-300)
            throw DegenerateInputError("normalize_rows: row " + std::to_string(i) + " is zero");
        for (int j = 0; j < n; ++j) row[j] /= norm;
    }
    return out;
}

double reduce_sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values) s += v;
    return s;
}

double reduce_mean(const Tensor& x) { return reduce_sum(x) / static_cast<double>(x.size()); }

}  // namespace seqcomp::num
