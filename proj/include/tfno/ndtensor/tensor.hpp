#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tfno {

using Shape = std::vector<std::size_t>;
using Complex = std::complex<double>;

std::size_t shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Global switch for NaN/Inf guards at tensor construction. On by default.
bool checked_mode();
void set_checked_mode(bool enabled);

/// RAII toggle for checked mode, restores the previous state on exit.
class CheckedModeGuard {
public:
    explicit CheckedModeGuard(bool enabled);
    ~CheckedModeGuard();
    CheckedModeGuard(const CheckedModeGuard&) = delete;
    CheckedModeGuard& operator=(const CheckedModeGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& vector() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    /// Value of a rank-0 or single-element tensor.
    double item() const;

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    /// Throws if any entry is NaN or infinite (independent of checked mode).
    void require_finite(const std::string& what) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Dense row-major array of complex doubles, stored as interleaved (re, im) pairs.
class ComplexTensor {
public:
    ComplexTensor() = default;
    explicit ComplexTensor(Shape shape);
    ComplexTensor(Shape shape, std::vector<Complex> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    std::span<const Complex> data() const { return data_; }
    std::span<Complex> data() { return data_; }

    Complex operator[](std::size_t i) const { return data_[i]; }
    Complex& operator[](std::size_t i) { return data_[i]; }

    /// Set when the tensor holds the half spectrum of a real-input transform;
    /// `full_extent` is then the length of the original last transformed axis.
    bool half_spectrum() const { return half_spectrum_; }
    std::size_t full_extent() const { return full_extent_; }
    void mark_half_spectrum(std::size_t full_extent);

private:
    Shape shape_;
    std::vector<Complex> data_;
    bool half_spectrum_ = false;
    std::size_t full_extent_ = 0;
};

// Small helpers used across modules and tests.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double s);
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

} // namespace tfno
