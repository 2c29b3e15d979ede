#include "tfno/ndtensor/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tfno {

namespace {
std::atomic<bool> g_checked{true};

void check_finite_if_enabled(std::span<const double> data)
{
    if (!g_checked.load(std::memory_order_relaxed)) return;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            throw std::domain_error("non-finite tensor entry at flat index " + std::to_string(i));
        }
    }
}
} // namespace

bool checked_mode() { return g_checked.load(std::memory_order_relaxed); }
void set_checked_mode(bool enabled) { g_checked.store(enabled, std::memory_order_relaxed); }

CheckedModeGuard::CheckedModeGuard(bool enabled) : previous_(checked_mode()) { set_checked_mode(enabled); }
CheckedModeGuard::~CheckedModeGuard() { set_checked_mode(previous_); }

std::size_t shape_product(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_product(shape_) != data_.size()) {
        throw std::invalid_argument("tensor shape " + shape_to_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " data entries");
    }
    check_finite_if_enabled(data_);
}

Tensor Tensor::full(Shape shape, double value)
{
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

double Tensor::item() const
{
    if (data_.size() != 1) throw std::logic_error("item() on tensor of shape " + shape_to_string(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const&
{
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) &&
{
    if (shape_product(shape) != data_.size()) {
        throw std::invalid_argument("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
}

void Tensor::require_finite(const std::string& what) const
{
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw std::domain_error(what + ": non-finite entry at flat index " + std::to_string(i));
        }
    }
}

ComplexTensor::ComplexTensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_)) {}

ComplexTensor::ComplexTensor(Shape shape, std::vector<Complex> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_product(shape_) != data_.size()) {
        throw std::invalid_argument("complex tensor shape " + shape_to_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " entries");
    }
    if (checked_mode()) {
        for (const auto& z : data_) {
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
                throw std::domain_error("non-finite complex tensor entry");
            }
        }
    }
}

void ComplexTensor::mark_half_spectrum(std::size_t full_extent)
{
    half_spectrum_ = true;
    full_extent_ = full_extent;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                    shape_to_string(b.shape()));
    }
}

Tensor add(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor scaled(const Tensor& a, double s)
{
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

double dot(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs(const Tensor& a)
{
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace tfno
