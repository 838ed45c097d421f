#include <random>
#include <vector>

#include "doctest.h"
#include "freqadv/errors.hpp"
#include "freqadv/kernels.hpp"
#include "freqadv/parallel.hpp"

namespace k = freqadv::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("conv1d kernels match the serial reference") {
  std::mt19937_64 gen(5);
  for (auto padding : {k::Padding::valid, k::Padding::same}) {
    for (std::size_t kernel : {1u, 3u, 4u, 7u}) {
      const auto g = k::Conv1dShape::make(5, 3, 4, 37, kernel, padding);
      const auto x = randn(g.batch * g.in_channels * g.length, gen);
      const auto w = randn(g.out_channels * g.in_channels * g.kernel, gen);
      const auto b = randn(g.out_channels, gen);
      const auto dy = randn(g.batch * g.out_channels * g.out_length, gen);

      std::vector<double> y(dy.size()), y_ref(dy.size());
      k::conv1d_forward<double>(g, x, w, b, y);
      k::reference::conv1d_forward<double>(g, x, w, b, y_ref);
      CHECK(rel_diff(y, y_ref) < 1e-12);

      std::vector<double> dx(x.size(), 0.5), dx_ref(x.size(), 0.5);
      k::conv1d_backward_input<double>(g, dy, w, dx);
      k::reference::conv1d_backward_input<double>(g, dy, w, dx_ref);
      CHECK(rel_diff(dx, dx_ref) < 1e-12);

      std::vector<double> dw(w.size(), -1.0), dw_ref(w.size(), -1.0), db(b.size()), db_ref(b.size());
      k::conv1d_backward_params<double>(g, dy, x, dw, db);
      k::reference::conv1d_backward_params<double>(g, dy, x, dw_ref, db_ref);
      CHECK(rel_diff(dw, dw_ref) < 1e-12);
      CHECK(rel_diff(db, db_ref) < 1e-12);
    }
  }
}

TEST_CASE("dense kernels match the serial reference") {
  std::mt19937_64 gen(6);
  const k::DenseShape g{7, 13, 5};
  const auto x = randn(g.batch * g.in_features, gen);
  const auto w = randn(g.out_features * g.in_features, gen);
  const auto b = randn(g.out_features, gen);
  const auto dy = randn(g.batch * g.out_features, gen);

  std::vector<double> y(dy.size()), y_ref(dy.size());
  k::dense_forward<double>(g, x, w, b, y);
  k::reference::dense_forward<double>(g, x, w, b, y_ref);
  CHECK(rel_diff(y, y_ref) < 1e-12);

  std::vector<double> dx(x.size()), dx_ref(x.size());
  k::dense_backward_input<double>(g, dy, w, dx);
  k::reference::dense_backward_input<double>(g, dy, w, dx_ref);
  CHECK(rel_diff(dx, dx_ref) < 1e-12);

  std::vector<double> dw(w.size()), dw_ref(w.size()), db(b.size()), db_ref(b.size());
  k::dense_backward_params<double>(g, dy, x, dw, db);
  k::reference::dense_backward_params<double>(g, dy, x, dw_ref, db_ref);
  CHECK(rel_diff(dw, dw_ref) < 1e-12);
  CHECK(rel_diff(db, db_ref) < 1e-12);
}

TEST_CASE("kernel results do not depend on the thread count") {
  std::mt19937_64 gen(7);
  const auto g = k::Conv1dShape::make(9, 4, 6, 64, 5, k::Padding::same);
  const auto x = randn(g.batch * g.in_channels * g.length, gen);
  const auto w = randn(g.out_channels * g.in_channels * g.kernel, gen);
  const auto b = randn(g.out_channels, gen);
  std::vector<double> y1(g.batch * g.out_channels * g.out_length), y4(y1.size());
  const int saved = freqadv::max_threads();
  freqadv::set_threads(1);
  k::conv1d_forward<double>(g, x, w, b, y1);
  freqadv::set_threads(4);
  k::conv1d_forward<double>(g, x, w, b, y4);
  freqadv::set_threads(saved);
  CHECK(y1 == y4);
}

TEST_CASE("valid padding rejects kernels longer than the input") {
  CHECK_THROWS_AS(k::Conv1dShape::make(1, 1, 1, 3, 4, k::Padding::valid), freqadv::ConfigError);
  const auto g = k::Conv1dShape::make(1, 1, 1, 4, 4, k::Padding::same);
  CHECK(g.pad_left == 1);
  CHECK(g.out_length == 4);
}
