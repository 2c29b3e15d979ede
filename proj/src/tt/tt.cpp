#include "tfno/tt/tt.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

namespace tfno::tt {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

// Left partial products: left[k] is the (n_1..n_k, r_k) unfolding of the
// first k cores, left[0] = [[1]].
std::vector<std::vector<double>> left_partials(const std::vector<Tensor>& cores)
{
    std::vector<std::vector<double>> left(cores.size() + 1);
    left[0] = {1.0};
    std::size_t rows = 1;
    for (std::size_t k = 0; k < cores.size(); ++k) {
        const Tensor& g = cores[k];
        const std::size_t r_in = g.extent(0), n = g.extent(1), r_out = g.extent(2);
        left[k + 1].resize(rows * n * r_out);
        ConstMap lhs(left[k].data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(r_in));
        ConstMap rhs(g.data().data(), static_cast<Eigen::Index>(r_in), static_cast<Eigen::Index>(n * r_out));
        Map out(left[k + 1].data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n * r_out));
        out.noalias() = lhs * rhs;
        rows *= n;
    }
    return left;
}

// right[k] is the (r_k, n_{k+1}..n_d) unfolding of cores k+1..d, right[d] = [[1]].
std::vector<std::vector<double>> right_partials(const std::vector<Tensor>& cores)
{
    const std::size_t d = cores.size();
    std::vector<std::vector<double>> right(d + 1);
    right[d] = {1.0};
    std::size_t cols = 1;
    for (std::size_t k = d; k-- > 0;) {
        const Tensor& g = cores[k];
        const std::size_t r_in = g.extent(0), n = g.extent(1), r_out = g.extent(2);
        right[k].resize(r_in * n * cols);
        ConstMap lhs(g.data().data(), static_cast<Eigen::Index>(r_in * n), static_cast<Eigen::Index>(r_out));
        ConstMap rhs(right[k + 1].data(), static_cast<Eigen::Index>(r_out), static_cast<Eigen::Index>(cols));
        Map out(right[k].data(), static_cast<Eigen::Index>(r_in * n), static_cast<Eigen::Index>(cols));
        out.noalias() = lhs * rhs;
        cols *= n;
    }
    return right;
}

} // namespace

void TTSpec::validate() const
{
    if (shape.size() < 2) throw std::invalid_argument("TTSpec: need at least 2 modes");
    if (ranks.size() + 1 != shape.size()) {
        throw std::invalid_argument("TTSpec: " + std::to_string(shape.size()) + " modes need " +
                                    std::to_string(shape.size() - 1) + " interior ranks, got " +
                                    std::to_string(ranks.size()));
    }
    for (auto n : shape) {
        if (n == 0) throw std::invalid_argument("TTSpec: zero extent");
    }
    for (auto r : ranks) {
        if (r == 0) throw std::invalid_argument("TTSpec: ranks must be >= 1");
    }
    if (!std::isfinite(init_scale) || init_scale < 0.0) throw std::invalid_argument("TTSpec: bad init scale");
}

std::vector<std::size_t> TTSpec::chain() const
{
    std::vector<std::size_t> c{1};
    c.insert(c.end(), ranks.begin(), ranks.end());
    c.push_back(1);
    return c;
}

TTCores::TTCores(std::vector<Tensor> cores) : cores_(std::move(cores)) { validate(); }

void TTCores::validate() const
{
    if (cores_.size() < 2) throw std::invalid_argument("TTCores: need at least 2 cores");
    for (std::size_t k = 0; k < cores_.size(); ++k) {
        if (cores_[k].rank() != 3) {
            throw std::invalid_argument("TTCores: core " + std::to_string(k) + " has shape " +
                                        shape_to_string(cores_[k].shape()) + ", expected order 3");
        }
    }
    if (cores_.front().extent(0) != 1 || cores_.back().extent(2) != 1) {
        throw std::invalid_argument("TTCores: boundary ranks must be 1");
    }
    for (std::size_t k = 0; k + 1 < cores_.size(); ++k) {
        if (cores_[k].extent(2) != cores_[k + 1].extent(0)) {
            throw std::invalid_argument("TTCores: rank chain broken between cores " + std::to_string(k) + " " +
                                        shape_to_string(cores_[k].shape()) + " and " + std::to_string(k + 1) + " " +
                                        shape_to_string(cores_[k + 1].shape()));
        }
    }
}

Shape TTCores::dense_shape() const
{
    Shape s;
    for (const auto& c : cores_) s.push_back(c.extent(1));
    return s;
}

std::vector<std::size_t> TTCores::ranks() const
{
    std::vector<std::size_t> r;
    for (std::size_t k = 0; k + 1 < cores_.size(); ++k) r.push_back(cores_[k].extent(2));
    return r;
}

std::size_t TTCores::param_count() const
{
    std::size_t n = 0;
    for (const auto& c : cores_) n += c.size();
    return n;
}

TTCores tt_random_init(const TTSpec& spec, std::uint64_t seed)
{
    spec.validate();
    const auto chain = spec.chain();
    std::mt19937_64 rng(seed);
    std::vector<Tensor> cores;
    for (std::size_t k = 0; k < spec.shape.size(); ++k) {
        const double std_dev = spec.init_scale / std::sqrt(static_cast<double>(chain[k] * chain[k + 1]));
        Tensor core({chain[k], spec.shape[k], chain[k + 1]});
        if (std_dev > 0.0) {
            std::normal_distribution<double> dist(0.0, std_dev);
            for (auto& v : core.data()) v = dist(rng);
        }
        cores.push_back(std::move(core));
    }
    return TTCores(std::move(cores));
}

double init_scale_for_variance(double target_variance, std::span<const std::size_t> ranks, std::size_t order)
{
    double rank_product = 1.0;
    for (auto r : ranks) rank_product *= static_cast<double>(r);
    return std::pow(target_variance * rank_product, 1.0 / (2.0 * static_cast<double>(order)));
}

Tensor tt_contract(const TTCores& cores)
{
    cores.validate();
    auto left = left_partials(cores.cores());
    return Tensor(cores.dense_shape(), std::move(left.back()));
}

TTCores tt_svd(const Tensor& dense, std::span<const std::size_t> max_ranks, double rel_tol)
{
    const std::size_t d = dense.rank();
    if (d < 2) throw std::invalid_argument("tt_svd: need at least 2 modes");
    if (max_ranks.size() + 1 != d) throw std::invalid_argument("tt_svd: one max rank per interior bond required");

    std::vector<Tensor> cores;
    std::vector<double> rest(dense.data().begin(), dense.data().end());
    std::size_t r_prev = 1;
    std::size_t remaining = dense.size();
    for (std::size_t k = 0; k + 1 < d; ++k) {
        const std::size_t n = dense.extent(k);
        remaining /= n;
        const auto rows = static_cast<Eigen::Index>(r_prev * n);
        const auto cols = static_cast<Eigen::Index>(remaining);
        RowMatrix unfolding = ConstMap(rest.data(), rows, cols);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(unfolding, Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (svd.info() != Eigen::Success) throw std::runtime_error("tt_svd: SVD did not converge");

        const auto& s = svd.singularValues();
        std::size_t r = 1;
        while (r < static_cast<std::size_t>(s.size()) && r < max_ranks[k] && s(static_cast<Eigen::Index>(r)) > rel_tol * s(0)) {
            ++r;
        }
        const auto re = static_cast<Eigen::Index>(r);

        Tensor core({r_prev, n, r});
        Map(core.data().data(), rows, re) = svd.matrixU().leftCols(re);
        cores.push_back(std::move(core));

        RowMatrix next = s.head(re).asDiagonal() * svd.matrixV().leftCols(re).transpose();
        rest.assign(next.data(), next.data() + next.size());
        r_prev = r;
    }
    cores.push_back(Tensor({r_prev, dense.extent(d - 1), 1}, std::move(rest)));
    return TTCores(std::move(cores));
}

std::size_t tt_param_count(const TTSpec& spec)
{
    spec.validate();
    const auto chain = spec.chain();
    std::size_t n = 0;
    for (std::size_t k = 0; k < spec.shape.size(); ++k) n += chain[k] * spec.shape[k] * chain[k + 1];
    return n;
}

std::size_t dense_param_count(const Shape& shape) { return shape_product(shape); }

ad::NodeId tt_contract(ad::Tape& tape, std::span<const ad::NodeId> core_ids)
{
    std::vector<Tensor> values;
    for (auto id : core_ids) values.push_back(tape.value(id));
    TTCores cores(values);
    auto left = std::make_shared<std::vector<std::vector<double>>>(left_partials(cores.cores()));
    Tensor dense(cores.dense_shape(), left->back());

    const ad::Tape* tp = &tape;
    std::vector<ad::NodeId> inputs(core_ids.begin(), core_ids.end());
    return tape.record(std::move(dense), inputs,
                       [tp, inputs, left](const ad::Value& g, std::vector<ad::Value>& gi, const std::vector<bool>& needs) {
                           const auto& grad = std::get<Tensor>(g);
                           std::vector<Tensor> cores;
                           for (auto id : inputs) cores.push_back(tp->value(id));
                           const auto right = right_partials(cores);
                           std::size_t n_left = 1;
                           std::size_t n_right = grad.size();
                           for (std::size_t k = 0; k < cores.size(); ++k) {
                               const std::size_t r_in = cores[k].extent(0), n = cores[k].extent(1),
                                                 r_out = cores[k].extent(2);
                               n_right /= n;
                               if (needs[k]) {
                                   // dG[a, i, b] = sum_{l, r} L[l, a] grad[l, i, r] R[b, r]
                                   ConstMap lmat((*left)[k].data(), static_cast<Eigen::Index>(n_left),
                                                 static_cast<Eigen::Index>(r_in));
                                   ConstMap gmat(grad.data().data(), static_cast<Eigen::Index>(n_left),
                                                 static_cast<Eigen::Index>(n * n_right));
                                   RowMatrix t1 = lmat.transpose() * gmat; // (r_in, n * n_right)
                                   ConstMap t1r(t1.data(), static_cast<Eigen::Index>(r_in * n),
                                                static_cast<Eigen::Index>(n_right));
                                   ConstMap rmat(right[k + 1].data(), static_cast<Eigen::Index>(r_out),
                                                 static_cast<Eigen::Index>(n_right));
                                   Tensor dcore({r_in, n, r_out});
                                   Map(dcore.data().data(), static_cast<Eigen::Index>(r_in * n),
                                       static_cast<Eigen::Index>(r_out))
                                       .noalias() = t1r * rmat.transpose();
                                   gi[k] = std::move(dcore);
                               }
                               n_left *= n;
                           }
                       });
}

} // namespace tfno::tt
