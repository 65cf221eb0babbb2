#include "dra/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dra {

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    std::size_t n = 1;
    for (std::size_t d : dims_) n *= d;
    data_.assign(n, 0.0);
}

Tensor::Tensor(std::initializer_list<std::size_t> dims)
    : Tensor(std::vector<std::size_t>(dims)) {}

Tensor Tensor::zeros(std::initializer_list<std::size_t> dims) { return Tensor(dims); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
    os << "]";
    return os.str();
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string("tensor shape mismatch in ") + op + ": " +
                                    a.shape_str() + " vs " + b.shape_str());
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "operator+");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "operator-");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor& operator+=(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "operator+=");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

Tensor& operator*=(Tensor& a, double s) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
    return a;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace dra
