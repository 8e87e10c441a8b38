#include <gtest/gtest.h>

#include "support.hpp"

using namespace voxdiff;

namespace {

Volume3 random_labels(Shape3 s, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> u(0, 3);
  Volume3 v(s);
  for (auto& x : v.data()) x = u(g);
  return v;
}

}  // namespace

TEST(Condition, OneHotEncoding) {
  Volume3 labels(Shape3{1, 1, 1}, 2.0);
  const auto c = build_condition(labels, Volume3(Shape3{1, 1, 1}, 0.25), 1);
  EXPECT_EQ(c.channels[ConditioningField::kCsf][0], 0.0);
  EXPECT_EQ(c.channels[ConditioningField::kGm][0], 1.0);
  EXPECT_EQ(c.channels[ConditioningField::kWm][0], 0.0);
  EXPECT_EQ(c.tumor()[0], 0.25);
}

TEST(Condition, BackgroundHasNoTissueChannel) {
  const auto c = build_condition(Volume3(Shape3{2, 2, 2}, 0.0), Volume3(Shape3{2, 2, 2}), 1);
  for (std::size_t k = 0; k < 3; ++k)
    for (double v : c.channels[k].data()) EXPECT_EQ(v, 0.0);
  EXPECT_NO_THROW(validate(c));
}

TEST(Condition, DownsamplesToLatentGrid) {
  const Volume3 labels = random_labels({240, 240, 160}, 1);
  const auto c = build_condition(labels, Volume3(Shape3{240, 240, 160}, 0.5), 4);
  EXPECT_EQ(c.latent_shape(), (Shape3{60, 60, 40}));
  for (double v : c.tumor().data()) EXPECT_EQ(v, 0.5);
  EXPECT_NO_THROW(validate(c));
}

TEST(Condition, RejectsBadInputs) {
  const Shape3 s{4, 4, 4};
  EXPECT_THROW(build_condition(Volume3(s, 4.0), Volume3(s), 4), InvalidArgument);
  EXPECT_THROW(build_condition(Volume3(s, 1.5), Volume3(s), 4), InvalidArgument);
  EXPECT_THROW(build_condition(Volume3(s, 1.0), Volume3(s, 1.2), 4), InvalidArgument);
  EXPECT_THROW(build_condition(Volume3(s, 1.0), Volume3(s, -0.1), 4), InvalidArgument);
  EXPECT_THROW(build_condition(Volume3(s, 1.0), Volume3(Shape3{4, 4, 8}), 4), InvalidArgument);
  EXPECT_THROW(build_condition(Volume3(s, 1.0), Volume3(s), 3), InvalidArgument);
}

TEST(Condition, ZeroTumorProperties) {
  const Shape3 s{8, 8, 8};
  const Volume3 labels = random_labels(s, 2);
  const Volume3 conc = vt::random_volume(s, 3);
  const auto c = build_condition(labels, conc, 4);
  const auto z = zero_tumor(c);
  double sum = 0.0;
  for (double v : z.tumor().data()) sum += v;
  EXPECT_EQ(sum, 0.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(z.channels[k].values(), c.channels[k].values());
  EXPECT_EQ(zero_tumor(z), z);
  EXPECT_EQ(z, build_condition(labels, Volume3(s, 0.0), 4));
}

TEST(Condition, FileRoundTripKeepsChannelOrder) {
  vt::TempDir dir("cond");
  const Shape3 s{8, 8, 4};
  const auto c = build_condition(random_labels(s, 4), vt::random_volume(s, 5), 2);
  write_condition(c, dir / "c.f32");
  const auto meta = detail::read_json_file(sidecar_path(dir / "c.f32"));
  EXPECT_EQ(meta.at("channels").get<std::vector<std::string>>(),
            (std::vector<std::string>{"csf", "gm", "wm", "tumor_concentration"}));
  EXPECT_EQ(read_condition(dir / "c.f32"), c);
}

TEST(Condition, ReadRejectsWrongChannelOrder) {
  vt::TempDir dir("cond-bad");
  Stack st{{1, 1, 1}, {}, {"gm", "csf", "wm", "tumor_concentration"}, {0, 1, 0, 0}};
  write_stack(st, dir / "c.f32");
  EXPECT_THROW(read_condition(dir / "c.f32"), IoError);
}
