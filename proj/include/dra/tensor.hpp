#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dra {

// Dense row-major tensor of doubles, up to 4 dimensions.
// Feature maps are [c,h,w], images are [3,h,w], conv weights [oc,ic,k,k].
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims);
    Tensor(std::initializer_list<std::size_t> dims);

    static Tensor zeros(std::initializer_list<std::size_t> dims);

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t ndim() const { return dims_.size(); }
    std::size_t dim(std::size_t i) const { return dims_[i]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // [c,h,w] accessors
    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * dims_[1] + y) * dims_[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * dims_[1] + y) * dims_[2] + x];
    }

    void fill(double v);
    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

// Element-wise helpers used across the model code.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor& operator+=(Tensor& a, const Tensor& b);
Tensor& operator*=(Tensor& a, double s);
double max_abs_diff(const Tensor& a, const Tensor& b);

} // namespace dra
