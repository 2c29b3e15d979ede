#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "tfno/ndtensor/tensor.hpp"

namespace tfno::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> data(shape_product(shape));
    for (auto& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data));
}

inline ComplexTensor random_complex(Shape shape, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Complex> data(shape_product(shape));
    for (auto& v : data) v = Complex(dist(rng), dist(rng));
    return ComplexTensor(std::move(shape), std::move(data));
}

inline double real_inner(const ComplexTensor& a, const ComplexTensor& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    return s;
}

} // namespace tfno::testing
