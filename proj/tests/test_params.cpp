#include <gtest/gtest.h>

#include "cdt/params.hpp"

using namespace cdt;

namespace {

ArchitectureConfig sdt(std::int64_t r, std::int64_t o, int d, DiscretizeMode m = DiscretizeMode::none) {
  ArchitectureConfig c;
  c.family = Family::sdt;
  c.inputs = r;
  c.outputs = o;
  c.depth = d;
  c.mode = m;
  return c;
}

ArchitectureConfig cdt_config(std::int64_t r, std::int64_t k, std::int64_t o, int d1, int d2,
                              DiscretizeMode m = DiscretizeMode::none) {
  ArchitectureConfig c;
  c.family = Family::cdt;
  c.inputs = r;
  c.features = k;
  c.outputs = o;
  c.feature_depth = d1;
  c.decision_depth = d2;
  c.mode = m;
  return c;
}

struct CdtRow {
  int d1, d2;
  std::int64_t soft, f_only, d_only, f_and_d;
};

void expect_cdt_row(std::int64_t r, std::int64_t k, std::int64_t o, const CdtRow& row) {
  SCOPED_TRACE(std::to_string(row.d1) + "+" + std::to_string(row.d2));
  EXPECT_EQ(param_count(cdt_config(r, k, o, row.d1, row.d2)), row.soft);
  EXPECT_EQ(param_count(cdt_config(r, k, o, row.d1, row.d2, DiscretizeMode::cdt_f_only)), row.f_only);
  EXPECT_EQ(param_count(cdt_config(r, k, o, row.d1, row.d2, DiscretizeMode::cdt_d_only)), row.d_only);
  EXPECT_EQ(param_count(cdt_config(r, k, o, row.d1, row.d2, DiscretizeMode::cdt_f_and_d)), row.f_and_d);
}

}  // namespace

TEST(ParamCount, CartPoleSdtRows) {
  const std::int64_t soft[] = {23, 51, 107};
  const std::int64_t hard[] = {14, 30, 62};
  for (int d = 2; d <= 4; ++d) {
    EXPECT_EQ(param_count(sdt(4, 2, d)), soft[d - 2]);
    EXPECT_EQ(param_count(sdt(4, 2, d, DiscretizeMode::sdt)), hard[d - 2]);
  }
}

TEST(ParamCount, CartPoleCdtRows) {
  expect_cdt_row(4, 2, 2, {1, 2, 38, 35, 35, 32});
  expect_cdt_row(4, 2, 2, {2, 1, 54, 45, 53, 44});
  expect_cdt_row(4, 2, 2, {2, 2, 64, 55, 61, 52});
}

TEST(ParamCount, LunarLanderSdtRows) {
  const std::int64_t soft[] = {199, 407, 823, 1655};
  const std::int64_t hard[] = {94, 190, 382, 766};
  for (int d = 4; d <= 7; ++d) {
    EXPECT_EQ(param_count(sdt(8, 4, d)), soft[d - 4]);
    EXPECT_EQ(param_count(sdt(8, 4, d, DiscretizeMode::sdt)), hard[d - 4]);
  }
}

TEST(ParamCount, LunarLanderCdtRows) {
  expect_cdt_row(8, 2, 4, {2, 2, 116, 95, 113, 92});
  expect_cdt_row(8, 2, 4, {2, 3, 144, 123, 137, 116});
  expect_cdt_row(8, 2, 4, {3, 2, 216, 167, 213, 164});
  expect_cdt_row(8, 2, 4, {3, 3, 244, 195, 237, 188});
}

TEST(ParamCount, WorkedCascadeExample) {
  EXPECT_EQ(param_count(cdt_config(8, 4, 4, 2, 3)), 222);
  // The SDT formula at R=8, O=4, d=5 gives 407; 343 is the O=2 value.
  EXPECT_EQ(param_count(sdt(8, 4, 5)), 407);
  EXPECT_EQ(param_count(sdt(8, 2, 5)), 343);
}

TEST(ParamCount, MatchesInstantiatedModels) {
  Rng rng(1);
  for (int d = 1; d <= 5; ++d) {
    EXPECT_EQ(static_cast<std::int64_t>(param_count(make_sdt(6, 3, d, rng))), param_count(sdt(6, 3, d)));
    EXPECT_EQ(static_cast<std::int64_t>(param_count(discretize(make_sdt(6, 3, d, rng)))),
              param_count(sdt(6, 3, d, DiscretizeMode::sdt)));
  }
  for (int d1 = 1; d1 <= 3; ++d1) {
    for (int d2 = 1; d2 <= 3; ++d2) {
      const auto m = make_cdt(5, 3, 4, d1, d2, rng);
      EXPECT_EQ(static_cast<std::int64_t>(param_count(m)), param_count(cdt_config(5, 3, 4, d1, d2)));
      for (auto mode : {DiscretizeMode::cdt_f_only, DiscretizeMode::cdt_d_only, DiscretizeMode::cdt_f_and_d}) {
        EXPECT_EQ(static_cast<std::int64_t>(param_count(discretize(m, mode))),
                  param_count(cdt_config(5, 3, 4, d1, d2, mode)));
      }
    }
  }
}

TEST(ParamCount, RejectsBadDimensions) {
  EXPECT_THROW(param_count(sdt(0, 2, 3)), std::invalid_argument);
  EXPECT_THROW(param_count(sdt(4, 2, 0)), std::invalid_argument);
  EXPECT_THROW(param_count(cdt_config(4, 0, 2, 1, 2)), std::invalid_argument);
  ArchitectureConfig mlp;
  mlp.family = Family::mlp;
  EXPECT_THROW(param_count(mlp), std::invalid_argument);
}

TEST(ParamRatioSweep, WorkedRowAndShape) {
  const auto rows = param_ratio_sweep(8, 4, 4, 2, 20);
  ASSERT_EQ(rows.size(), 19u);
  const auto& d5 = rows[3];
  EXPECT_EQ(d5.depth, 5);
  EXPECT_EQ(d5.feature_depth, 2);
  EXPECT_EQ(d5.decision_depth, 3);
  EXPECT_EQ(d5.cdt_params, 222);
  EXPECT_EQ(d5.sdt_params, 407);
  for (const auto& r : rows) {
    EXPECT_EQ(r.feature_depth + r.decision_depth, r.depth);
    EXPECT_DOUBLE_EQ(r.ratio, static_cast<double>(r.cdt_params) / static_cast<double>(r.sdt_params));
  }
}

TEST(ParamRatioSweep, DepthTwoInstantiation) {
  for (std::int64_t r : {1, 4, 8}) {
    for (std::int64_t k : {1, 2, 4}) {
      for (std::int64_t o : {2, 3}) {
        const auto row = param_ratio_sweep(r, k, o, 2, 2).front();
        EXPECT_EQ(row.cdt_params, (r + 1) + 2 * k * r + (k + 1) + 2 * o);
      }
    }
  }
}

TEST(ParamRatioSweep, RatioStrictlyDecreasingFromDepthSix) {
  const auto rows = param_ratio_sweep(8, 4, 4, 6, 20);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(rows[i].ratio, rows[i - 1].ratio) << "d=" << rows[i].depth;
  }
}

TEST(ParamRatioSweep, RangeValidation) {
  EXPECT_THROW(param_ratio_sweep(8, 4, 4, 1, 5), std::invalid_argument);
  EXPECT_THROW(param_ratio_sweep(8, 4, 4, 2, 21), std::invalid_argument);
  EXPECT_THROW(param_ratio_sweep(8, 4, 4, 7, 6), std::invalid_argument);
}

TEST(Family, RoundTrip) {
  for (auto f : {Family::sdt, Family::cdt, Family::mlp}) EXPECT_EQ(parse_family(to_string(f)), f);
  EXPECT_THROW(parse_family("forest"), std::invalid_argument);
  for (auto m : {DiscretizeMode::none, DiscretizeMode::sdt, DiscretizeMode::cdt_f_only, DiscretizeMode::cdt_d_only,
                 DiscretizeMode::cdt_f_and_d}) {
    EXPECT_EQ(parse_discretize_mode(to_string(m)), m);
  }
}
