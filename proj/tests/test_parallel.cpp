#include <gtest/gtest.h>

#include <stdexcept>

#include "edsep/parallel.hpp"
#include "helpers.hpp"

using namespace edsep;

TEST(Parallel, EnsembleMatchesSerialReference) {
  const StackedSignal s = edsep::testing::random_stack(2, 16, 1);
  const Signal y = s.row_sum();
  const auto ref = ensemble_endpoints_serial(s, y, SdeParams(), 100, 24, 5);
  for (int jobs : {1, 2, 4}) {
    const auto got = ensemble_endpoints_omp(s, y, SdeParams(), 100, 24, 5, jobs);
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(got[i], ref[i]);
  }
}

TEST(Parallel, ExceptionsPropagate) {
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(Parallel, DefaultJobsIsPositive) { EXPECT_GE(default_jobs(), 1); }
