#include "gramnas/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gramnas/error.hpp"

namespace gramnas {

auto normal_pdf(double z) -> double
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

auto normal_cdf(double z) -> double
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

auto ranks(std::span<const double> values) -> std::vector<double>
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> r(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        double mean = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = mean;
        }
        i = j + 1;
    }
    return r;
}

auto pearson(std::span<const double> a, std::span<const double> b) -> double
{
    if (a.size() != b.size() || a.size() < 2) {
        throw Error("correlation needs two equally sized samples with at least two values");
    }
    auto n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

auto spearman(std::span<const double> a, std::span<const double> b) -> double
{
    auto ra = ranks(a);
    auto rb = ranks(b);
    return pearson(ra, rb);
}

auto median(std::vector<double> values) -> double
{
    if (values.empty()) {
        throw Error("median of an empty sample");
    }
    std::sort(values.begin(), values.end());
    auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace gramnas
