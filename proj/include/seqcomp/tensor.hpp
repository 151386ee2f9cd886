#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace seqcomp::num {

// Dense row-major tensor of doubles. Rank is 1 or 2 in practice; the shape is
// kept as a general dimension list. `grad`, when non-empty, mirrors `values`
// element for element.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(std::vector<int> shape_in, std::vector<double> values_in);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double fill);
    static Tensor matrix(int rows, int cols, std::initializer_list<double> vals);
    static Tensor vec(std::initializer_list<double> vals);
    static Tensor identity(int n);

    int rank() const { return static_cast<int>(shape.size()); }
    long long size() const { return static_cast<long long>(values.size()); }
    int rows() const;
    int cols() const;

    double& at(int r, int c);
    double at(int r, int c) const;
    double& operator[](size_t i) { return values[i]; }
    double operator[](size_t i) const { return values[i]; }

    bool has_grad() const { return !grad.empty(); }
    void alloc_grad();   // zero-filled, same extent as values
    void clear_grad();

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

long long shape_product(const std::vector<int>& shape);

// ---- value-level kernels -------------------------------------------------
// These are the forward implementations shared by the plain operation surface
// and the autodiff graph, so both routes run identical arithmetic.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Row-stabilized softmax over the last dimension of a matrix.
Tensor softmax_rows(const Tensor& x);

// Per-row standardization with epsilon 1e-5 inside the variance square root,
// followed by the gamma/beta affine over columns.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);
inline constexpr double kLayerNormEps = 1e-5;

Tensor gelu(const Tensor& x);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, int row_begin, int row_end);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, std::vector<int> new_shape);
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);

// out.values[i] = x.values[indices[i]]
Tensor gather(const Tensor& x, const std::vector<int>& indices, std::vector<int> out_shape);

// Each row divided by its Euclidean norm. Throws DegenerateInputError on a
// (near-)zero row.
Tensor normalize_rows(const Tensor& x);

double reduce_sum(const Tensor& x);
double reduce_mean(const Tensor& x);

}  // namespace seqcomp::num
