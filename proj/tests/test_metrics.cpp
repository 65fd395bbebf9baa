#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "twsc/metrics.hpp"

using namespace twsc;

namespace {

Tensor<double> random_images(int batch, int h, int w, RngStream& rng) {
  Tensor<double> t(Shape{1, batch, h, w});
  for (auto& v : t.storage()) v = rng.uniform();
  return t;
}

Tensor<double> noisy_copy(const Tensor<double>& t, double sd, RngStream& rng) {
  auto out = t;
  for (auto& v : out.storage()) v = std::clamp(v + sd * rng.normal(), 0.0, 1.0);
  return out;
}

}  // namespace

TEST(Psnr, ExactReconstructionIsFlagged) {
  RngStream rng(1, "test");
  const auto a = random_images(3, 28, 28, rng);
  const auto p = psnr(a, a);
  EXPECT_EQ(p.exact_count, 3);
  for (const auto& v : p.per_image) {
    EXPECT_TRUE(v.exact);
    EXPECT_EQ(v.db, kExactPsnrDb);
  }
  EXPECT_TRUE(std::isfinite(p.mean_db));
}

TEST(Psnr, UniformOffsetGivesTwentyDb) {
  Tensor<double> a(Shape{1, 2, 28, 28}, 0.3), b(Shape{1, 2, 28, 28}, 0.4);
  const auto p = psnr(a, b);
  EXPECT_NEAR(p.per_image[0].db, 20.0, 1e-9);
  EXPECT_FALSE(p.per_image[1].exact);
  EXPECT_NEAR(p.mean_db, 20.0, 1e-9);
}

TEST(Psnr, MatchesBruteForceOracle) {
  RngStream rng(2, "test");
  const auto a = random_images(5, 28, 28, rng);
  const auto b = noisy_copy(a, 0.1, rng);
  const auto p = psnr(a, b);
  for (int i = 0; i < 5; ++i) {
    const double want = oracle::psnr(a.data() + a.index(0, i), b.data() + b.index(0, i), 28, 28);
    EXPECT_NEAR(p.per_image[static_cast<std::size_t>(i)].db, want, 1e-6);
  }
}

TEST(Psnr, InvariantUnderSharedPixelPermutation) {
  RngStream rng(3, "test");
  const auto a = random_images(1, 28, 28, rng);
  const auto b = noisy_copy(a, 0.2, rng);
  std::vector<std::size_t> perm(784);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  auto pa = a, pb = b;
  for (std::size_t i = 0; i < 784; ++i) {
    pa.data()[i] = a.data()[perm[i]];
    pb.data()[i] = b.data()[perm[i]];
  }
  EXPECT_NEAR(psnr(a, b).mean_db, psnr(pa, pb).mean_db, 1e-9);
}

TEST(Psnr, ShapeMismatchIsAContractError) {
  EXPECT_THROW(psnr(Tensor<double>(Shape{1, 1, 28, 28}), Tensor<double>(Shape{1, 2, 28, 28})), ContractError);
}

TEST(Ssim, IdenticalImagesScoreOne) {
  RngStream rng(4, "test");
  const auto a = random_images(2, 28, 28, rng);
  const auto s = ssim(a, a);
  for (double v : s.per_image) EXPECT_NEAR(v, 1.0, 1e-9);
  const auto b = noisy_copy(a, 0.05, rng);
  for (double v : ssim(a, b).per_image) EXPECT_LT(v, 1.0 - 1e-6);
}

TEST(Ssim, ConstantImagesFollowTheLuminanceTerm) {
  for (double d : {0.01, 0.1, 0.4}) {
    Tensor<double> a(Shape{1, 1, 28, 28}, 0.5), b(Shape{1, 1, 28, 28}, 0.5 + d);
    const double c1 = 1e-4;
    const double want = (2 * 0.5 * (0.5 + d) + c1) / (0.25 + (0.5 + d) * (0.5 + d) + c1);
    EXPECT_NEAR(ssim(a, b).mean, want, 1e-9) << d;
  }
}

TEST(Ssim, MatchesSlidingWindowOracle) {
  RngStream rng(5, "test");
  const auto a = random_images(4, 28, 28, rng);
  for (double sd : {0.02, 0.2, 0.6}) {
    const auto b = noisy_copy(a, sd, rng);
    const auto s = ssim(a, b);
    for (int i = 0; i < 4; ++i) {
      const double want = oracle::ssim(a.data() + a.index(0, i), b.data() + b.index(0, i), 28, 28);
      EXPECT_NEAR(s.per_image[static_cast<std::size_t>(i)], want, 1e-4);
    }
  }
}

TEST(Ssim, SymmetricAndBounded) {
  RngStream rng(6, "test");
  const auto a = random_images(3, 20, 17, rng);
  const auto b = random_images(3, 20, 17, rng);
  const auto ab = ssim(a, b), ba = ssim(b, a);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(ab.per_image[i], ba.per_image[i], 1e-9);
    EXPECT_LE(ab.per_image[i], 1.0);
    EXPECT_GE(ab.per_image[i], -1.0);
  }
}

TEST(Ssim, ImageSmallerThanWindowIsAContractError) {
  Tensor<double> a(Shape{1, 1, 8, 8});
  EXPECT_THROW(ssim(a, a), ContractError);
}

TEST(MetricTable, CsvHasFixedHeaderAndOneLinePerRow) {
  MetricTable t;
  t.rows.push_back({"twsc", "awgn", "rayleigh", 10, "avg", 21.5, 0.8, 100, 0});
  t.rows.push_back({"twsc", "awgn", "rayleigh", 10, "A->B", 21.0, 0.79, 100, 0});
  const auto csv = to_csv(t);
  EXPECT_EQ(csv.rfind(kMetricTableHeader, 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(t.averaged().size(), 1u);
  EXPECT_EQ(to_json(t).size(), 2u);
}
