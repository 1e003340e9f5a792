#include <benchmark/benchmark.h>

#include <random>

#include "hte/gbtree.hpp"
#include "hte/random.hpp"
#include "hte/shapley.hpp"
#include "hte/tuning.hpp"

namespace {

hte::FeatureMatrix make_matrix(std::size_t rows, std::size_t cols, std::vector<double>& y) {
  auto rng = hte::make_rng(42, "bench");
  std::normal_distribution<double> dist;
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = dist(rng);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cols; ++c) names.push_back("x" + std::to_string(c));
  y.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = values.data() + r * cols;
    y[r] = (x[0] < 0 ? 0.3 : 0.0) + 0.5 * x[1] + dist(rng);
  }
  return hte::FeatureMatrix(rows, std::move(names), std::move(values));
}

void BM_Train(benchmark::State& state) {
  std::vector<double> y;
  const auto x = make_matrix(static_cast<std::size_t>(state.range(0)), 12, y);
  hte::gbtree::Hyperparams hp;
  hp.max_depth = static_cast<int>(state.range(1));
  hp.n_trees = 50;
  for (auto _ : state) benchmark::DoNotOptimize(hte::gbtree::train(x, y, hp));
  state.SetItemsProcessed(state.iterations() * state.range(0) * hp.n_trees);
}
BENCHMARK(BM_Train)->Args({1000, 3})->Args({5000, 3})->Args({5000, 6})->Unit(benchmark::kMillisecond);

void BM_TreeShap(benchmark::State& state) {
  std::vector<double> y;
  const auto x = make_matrix(2000, 12, y);
  hte::gbtree::Hyperparams hp;
  hp.max_depth = static_cast<int>(state.range(0));
  hp.n_trees = 100;
  const auto model = hte::gbtree::train(x, y, hp);
  for (auto _ : state) benchmark::DoNotOptimize(hte::shapley::tree_shap(model, x));
  state.SetItemsProcessed(state.iterations() * 2000);
}
BENCHMARK(BM_TreeShap)->Arg(2)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_BruteForceShap(benchmark::State& state) {
  std::vector<double> y;
  const auto x = make_matrix(500, static_cast<std::size_t>(state.range(0)), y);
  hte::gbtree::Hyperparams hp;
  hp.max_depth = 4;
  hp.n_trees = 20;
  const auto model = hte::gbtree::train(x, y, hp);
  for (auto _ : state) benchmark::DoNotOptimize(hte::shapley::brute_force_shap(model, x.row(0)));
}
BENCHMARK(BM_BruteForceShap)->Arg(4)->Arg(8)->Arg(12);

void BM_InnerCv(benchmark::State& state) {
  std::vector<double> y;
  const auto x = make_matrix(2000, 12, y);
  std::vector<std::string> groups(2000);
  for (std::size_t i = 0; i < groups.size(); ++i) groups[i] = "g" + std::to_string(i % 10);
  const auto splits = hte::tuning::inner_splits(groups, 5, 1);
  hte::gbtree::Hyperparams hp;
  hp.max_depth = 3;
  hp.n_trees = 50;
  for (auto _ : state) benchmark::DoNotOptimize(hte::tuning::inner_cv_rmse(x, y, splits, hp));
}
BENCHMARK(BM_InnerCv)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
