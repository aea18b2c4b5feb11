#include <gtest/gtest.h>

#include <cmath>

#include "edsep/error.hpp"
#include "edsep/mixalg.hpp"
#include "helpers.hpp"

using namespace edsep;
using edsep::testing::max_abs_diff;
using edsep::testing::random_stack;

TEST(MixAlg, ProjectionsSplitTheSignal) {
  const StackedSignal x = random_stack(3, 40, 1);
  const StackedSignal pm = project_mean(x);
  const StackedSignal pr = project_residual(x);
  EXPECT_LT(max_abs_diff(pm + pr, x), 1e-14);
  EXPECT_LT(max_abs_diff(project_mean(pm), pm), 1e-14);
  EXPECT_LT(max_abs_diff(project_residual(pr), pr), 1e-14);
  EXPECT_NEAR(dot(pm, pr), 0.0, 1e-12);
  for (double v : pr.row_sum()) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(MixAlg, MeanProjectionOfTwoRows) {
  const StackedSignal x = StackedSignal::from_rows({{2.0}, {0.0}});
  const StackedSignal pm = project_mean(x);
  EXPECT_DOUBLE_EQ(pm(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(pm(1, 0), 1.0);
  const StackedSignal pr = project_residual(x);
  EXPECT_DOUBLE_EQ(pr(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(pr(1, 0), -1.0);
}

TEST(MixAlg, StackMixtureReplicatesMean) {
  const Signal y = {3.0, -6.0};
  const StackedSignal s = stack_mixture(y, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(s(k, 0), 1.0);
    EXPECT_DOUBLE_EQ(s(k, 1), -2.0);
  }
  EXPECT_THROW(stack_mixture(y, 1), InvalidArgument);
}

TEST(MixAlg, RejectsNonFinite) {
  StackedSignal x = random_stack(2, 4, 2);
  x(1, 2) = std::nan("");
  EXPECT_THROW(project_mean(x), InvalidArgument);
  EXPECT_THROW(project_residual(x), InvalidArgument);
}

TEST(MixAlg, PermutationsAreLexicographic) {
  const auto perms = all_permutations(3);
  ASSERT_EQ(perms.size(), 6u);
  EXPECT_TRUE(perms.front().is_identity());
  for (std::size_t i = 1; i < perms.size(); ++i) EXPECT_LT(perms[i - 1], perms[i]);
  EXPECT_EQ(all_permutations(6).size(), 720u);
  EXPECT_THROW(all_permutations(7), InvalidArgument);
  EXPECT_THROW(Permutation({0, 0}), InvalidArgument);
  EXPECT_THROW(Permutation({0, 2}), InvalidArgument);
}

TEST(MixAlg, PermutationInverseUndoesRelabeling) {
  const StackedSignal x = random_stack(4, 5, 3);
  for (const Permutation& a : all_permutations(4)) {
    EXPECT_EQ(apply_permutation(apply_permutation(x, a), a.inverse()), x);
  }
}

TEST(MixAlg, ProjectionsCommuteWithRelabeling) {
  const StackedSignal x = random_stack(3, 16, 4);
  const Permutation a({2, 0, 1});
  EXPECT_LT(max_abs_diff(project_residual(apply_permutation(x, a)),
                         apply_permutation(project_residual(x), a)),
            1e-15);
}
