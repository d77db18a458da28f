#pragma once

#include <span>
#include <vector>

namespace gramnas {

auto normal_pdf(double z) -> double;
auto normal_cdf(double z) -> double;

// Average ranks (1-based), ties share the mean rank.
auto ranks(std::span<const double> values) -> std::vector<double>;
auto pearson(std::span<const double> a, std::span<const double> b) -> double;
auto spearman(std::span<const double> a, std::span<const double> b) -> double;

auto median(std::vector<double> values) -> double;

} // namespace gramnas
