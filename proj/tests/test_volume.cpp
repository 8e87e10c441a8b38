#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "support.hpp"

using namespace voxdiff;

TEST(Volume, ShapeIndexIsXFastest) {
  const Shape3 s{3, 4, 5};
  EXPECT_EQ(s.size(), 60u);
  EXPECT_EQ(s.index(1, 0, 0), 1u);
  EXPECT_EQ(s.index(0, 1, 0), 3u);
  EXPECT_EQ(s.index(0, 0, 1), 12u);
}

TEST(Volume, RejectsBadDataLengthAndSpacing) {
  EXPECT_THROW(Volume3(Shape3{2, 2, 2}, std::vector<double>(7)), InvalidArgument);
  EXPECT_THROW(Volume3(Shape3{2, 2, 2}, 0.0, Spacing3{1, 0, 1}), InvalidArgument);
}

TEST(Volume, NormalizeRescalesAffinely) {
  Volume3 v(Shape3{3, 1, 1}, std::vector<double>{0, 5, 10});
  const Volume3 n = normalize_intensity(v);
  EXPECT_DOUBLE_EQ(n[0], 0.0);
  EXPECT_DOUBLE_EQ(n[1], 0.5);
  EXPECT_DOUBLE_EQ(n[2], 1.0);
}

TEST(Volume, NormalizeIsIdentityOnUnitRange) {
  Volume3 v(Shape3{4, 1, 1}, std::vector<double>{0, 1, 0.25, 1});
  EXPECT_EQ(normalize_intensity(v), v);
}

TEST(Volume, NormalizeConstantGivesZeros) {
  const Volume3 n = normalize_intensity(Volume3(Shape3{2, 2, 2}, 7.0));
  for (double x : n.data()) EXPECT_EQ(x, 0.0);
}

TEST(Volume, NormalizeAllNanThrows) {
  Volume3 v(Shape3{2, 1, 1}, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(normalize_intensity(v), NumericError);
}

TEST(Volume, NormalizePropertiesOnRandomVolumes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Volume3 v = vt::random_volume({5, 6, 7}, seed, -3.0, 9.0);
    const Volume3 n = normalize_intensity(v);
    for (double x : n.data()) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
    const Volume3 nn = normalize_intensity(n);
    for (std::size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(nn[i], n[i], 1e-15);
  }
}

TEST(Volume, PadAppendsZerosAtHighEnd) {
  const Volume3 v = vt::random_volume({6, 6, 5}, 1, 0.1, 1.0);
  const Volume3 p = pad_to(v, {6, 6, 8});
  EXPECT_EQ(p.shape(), (Shape3{6, 6, 8}));
  for (std::size_t k = 5; k < 8; ++k)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(p(i, j, k), 0.0);
  EXPECT_EQ(p(2, 3, 4), v(2, 3, 4));
}

TEST(Volume, BratsGeometryPadsTo160) {
  EXPECT_EQ(round_up_shape({240, 240, 155}, 16), (Shape3{240, 240, 160}));
  const Volume3 v(Shape3{8, 8, 155}, 1.0);
  EXPECT_EQ(pad_to(v, {8, 8, 160}).shape(), (Shape3{8, 8, 160}));
}

TEST(Volume, PadCropRoundTrip) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Volume3 v = vt::random_volume({3 + seed % 4, 5, 2 + seed % 3}, seed);
    const Shape3 big{v.shape().nx + seed % 3, v.shape().ny + 2, v.shape().nz + 1};
    EXPECT_EQ(crop_to(pad_to(v, big), v.shape()), v);
  }
  const Volume3 v = vt::random_volume({4, 4, 4}, 3);
  EXPECT_EQ(pad_to(v, v.shape()), v);
}

TEST(Volume, PadCropRejectInvalidTargets) {
  const Volume3 v(Shape3{4, 4, 4});
  EXPECT_THROW(pad_to(v, {3, 4, 4}), InvalidArgument);
  EXPECT_THROW(crop_to(v, {5, 4, 4}), InvalidArgument);
  EXPECT_THROW(crop_to(v, {0, 4, 4}), InvalidArgument);
}

TEST(Volume, NnDownsampleIsCornerAnchored) {
  const Volume3 v = vt::random_volume({8, 8, 4}, 9);
  const Volume3 d = nn_downsample(v, 4);
  EXPECT_EQ(d.shape(), (Shape3{2, 2, 1}));
  EXPECT_EQ(d(1, 1, 0), v(4, 4, 0));
  EXPECT_EQ(d(1, 0, 0), v(4, 0, 0));
  EXPECT_EQ(nn_downsample(v, 1), v);
  EXPECT_THROW(nn_downsample(v, 3), InvalidArgument);
}

TEST(Volume, NnDownsampleToBratsLatentGrid) {
  const Volume3 v(Shape3{240, 240, 160}, 0.0);
  EXPECT_EQ(nn_downsample(v, 4).shape(), (Shape3{60, 60, 40}));
}

TEST(Volume, BlockConstantSurvivesDownThenUp) {
  const Volume3 coarse = vt::random_volume({3, 2, 2}, 4);
  const Volume3 fine = repeat_upsample(coarse, 4);
  EXPECT_EQ(nn_downsample(fine, 4), coarse);
  EXPECT_EQ(repeat_upsample(nn_downsample(fine, 4), 4), fine);
}

TEST(Volume, DilateSingleVoxelGivesSeven) {
  MaskVolume m(Shape3{5, 5, 5});
  m(2, 2, 2) = 1;
  const MaskVolume d = dilate(m, 1);
  EXPECT_EQ(count_ones(d), 7u);
  EXPECT_EQ(d(1, 2, 2), 1);
  EXPECT_EQ(d(2, 2, 3), 1);
  EXPECT_EQ(d(1, 1, 2), 0);
}

TEST(Volume, DilateFixedPoints) {
  const MaskVolume zeros(Shape3{4, 4, 4}, 0);
  const MaskVolume ones(Shape3{4, 4, 4}, 1);
  EXPECT_EQ(dilate(zeros, 3), zeros);
  EXPECT_EQ(dilate(ones, 3), ones);
}

TEST(Volume, DilateIsExtensiveAndComposes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MaskVolume m = vt::random_mask({7, 6, 5}, seed, 0.08);
    const MaskVolume d1 = dilate(m, 1);
    for (std::size_t n = 0; n < m.size(); ++n)
      if (m[n]) { EXPECT_EQ(d1[n], 1); }
    EXPECT_EQ(dilate(d1, 1), dilate(m, 2));
  }
}

TEST(Volume, DownsampleAllRequiresFullFootprint) {
  MaskVolume m(Shape3{4, 4, 4}, 1);
  EXPECT_EQ(count_ones(downsample_all(m, 2)), 8u);
  m(3, 3, 3) = 0;
  const MaskVolume d = downsample_all(m, 2);
  EXPECT_EQ(count_ones(d), 7u);
  EXPECT_EQ(d(1, 1, 1), 0);
}

TEST(VolumeIo, NiftiRoundTripIsBitExact) {
  vt::TempDir dir("nifti");
  Volume3 v = vt::random_volume({7, 5, 3}, 11, -2.0, 3.0);
  v.set_spacing({0.5, 1.0, 2.5});
  write_volume(v, dir / "v.nii");
  const Volume3 r = read_volume(dir / "v.nii");
  EXPECT_EQ(r, v);
  EXPECT_EQ(r.spacing().sx, 0.5);
  EXPECT_EQ(r.spacing().sz, 2.5);
}

TEST(VolumeIo, F32RawRoundTripWithSidecar) {
  vt::TempDir dir("raw");
  Volume3 v = vt::random_volume({4, 3, 2}, 12);
  v.set_intensity_range({0.0, 1.0});
  write_volume(v, dir / "v.f32");
  EXPECT_TRUE(std::filesystem::exists(sidecar_path(dir / "v.f32")));
  const Volume3 r = read_volume(dir / "v.f32");
  EXPECT_EQ(r, v);
  EXPECT_TRUE(r.has_declared_range());
}

TEST(VolumeIo, SingleVoxelAndZeroVolumes) {
  vt::TempDir dir("tiny");
  write_volume(Volume3(Shape3{1, 1, 1}, 0.5), dir / "one.nii");
  const Volume3 one = read_volume(dir / "one.nii");
  EXPECT_EQ(one.shape(), (Shape3{1, 1, 1}));
  EXPECT_EQ(one[0], 0.5);
  const Volume3 zeros(Shape3{4, 4, 4}, 0.0);
  write_volume(zeros, dir / "z.f32");
  EXPECT_EQ(read_volume(dir / "z.f32"), zeros);
}

TEST(VolumeIo, HeaderShapePreservedForPaddedGeometry) {
  vt::TempDir dir("geom");
  write_volume(Volume3(Shape3{240, 240, 160}, 0.0), dir / "big.nii");
  EXPECT_EQ(read_volume(dir / "big.nii").shape(), (Shape3{240, 240, 160}));
}

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(VolumeIo, RejectsMalformedNifti) {
  vt::TempDir dir("bad");
  write_volume(Volume3(Shape3{2, 2, 2}, 1.0), dir / "ok.nii");
  const auto good = slurp(dir / "ok.nii");

  auto b = good;
  b[0] = 0x5d;  // sizeof_hdr != 348
  spit(dir / "a.nii", b);
  EXPECT_THROW(read_volume(dir / "a.nii"), IoError);

  b = good;
  const std::int16_t f64 = 64;
  std::memcpy(b.data() + 70, &f64, 2);
  spit(dir / "b.nii", b);
  EXPECT_THROW(read_volume(dir / "b.nii"), IoError);

  b = good;
  b.pop_back();
  spit(dir / "c.nii", b);
  EXPECT_THROW(read_volume(dir / "c.nii"), IoError);

  b = good;
  b[344] = 'x';
  spit(dir / "d.nii", b);
  EXPECT_THROW(read_volume(dir / "d.nii"), IoError);

  EXPECT_THROW(read_volume(dir / "missing.nii"), IoError);
}

TEST(VolumeIo, RawWithoutSidecarOrWrongSizeFails) {
  vt::TempDir dir("raw-bad");
  write_volume(Volume3(Shape3{2, 2, 2}, 1.0), dir / "v.f32");
  auto b = slurp(dir / "v.f32");
  b.resize(b.size() - 4);
  spit(dir / "v.f32", b);
  EXPECT_THROW(read_volume(dir / "v.f32"), IoError);
  spit(dir / "lonely.f32", std::vector<char>(32));
  EXPECT_THROW(read_volume(dir / "lonely.f32"), IoError);
}

TEST(VolumeIo, MaskRoundTripAndValidation) {
  vt::TempDir dir("mask");
  const MaskVolume m = vt::random_mask({5, 4, 3}, 2);
  write_mask(m, dir / "m.nii");
  EXPECT_EQ(read_mask(dir / "m.nii"), m);
  write_volume(Volume3(Shape3{2, 1, 1}, std::vector<double>{0, 0.5}), dir / "half.nii");
  EXPECT_THROW(read_mask(dir / "half.nii"), IoError);
}

TEST(VolumeIo, UnwritablePathIsIoError) {
  EXPECT_THROW(write_volume(Volume3(Shape3{1, 1, 1}), "/nonexistent-dir/x/v.nii"), IoError);
}
