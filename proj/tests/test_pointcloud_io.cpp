#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "r2vr/e57.hpp"
#include "r2vr/ply.hpp"
#include "r2vr/pointcloud.hpp"
#include "test_support.hpp"

using namespace r2vr;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, bool color = true, bool intensity = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-12.0, 12.0);
  std::uniform_int_distribution<int> ch(0, 255);
  std::uniform_real_distribution<float> in(0.0f, 1.0f);
  PointCloud c;
  c.has_color = color;
  c.has_intensity = intensity;
  c.stations.push_back({0, "north", RigidTransform::from_axis_angle(Vec3(0.2, 0.3, 1).normalized(), 0.7,
                                                                   Vec3(1.5, -2.25, 0.125))});
  for (std::size_t i = 0; i < n; ++i) {
    PointRecord r;
    r.position = Vec3(pos(rng), pos(rng), pos(rng));
    if (color) r.color = {std::uint8_t(ch(rng)), std::uint8_t(ch(rng)), std::uint8_t(ch(rng))};
    if (intensity) r.intensity = in(rng);
    c.records.push_back(r);
  }
  return c;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

double quantized(double x) { return std::round(x / e57::kCoordinateScale) * e57::kCoordinateScale; }

}  // namespace

TEST(Crc32c, KnownCheckValue) {
  const std::string s = "123456789";
  EXPECT_EQ(e57::crc32c({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xE3069283u);
}

TEST(Crc32c, PhysicalLogicalMapping) {
  EXPECT_EQ(e57::logical_to_physical(0), 0u);
  EXPECT_EQ(e57::logical_to_physical(1019), 1019u);
  EXPECT_EQ(e57::logical_to_physical(1020), 1024u);
  for (std::uint64_t l : {0ull, 5ull, 1020ull, 4095ull, 123456ull}) {
    EXPECT_EQ(e57::physical_to_logical(e57::logical_to_physical(l)), l);
  }
}

TEST(E57, RoundTripTenThousandPoints) {
  const auto dir = test_util::scratch_dir();
  const PointCloud c = random_cloud(10000, 7);
  write_e57(std::span(&c, 1), dir / "a.e57");
  const auto res = read_e57(dir / "a.e57");
  ASSERT_EQ(res.clouds.size(), 1u);
  const PointCloud& r = res.clouds[0];
  ASSERT_EQ(r.size(), c.size());
  EXPECT_EQ(res.document.data3d_entries[0].record_count, 10000u);
  EXPECT_GT(res.document.page_count, 1u);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      ASSERT_EQ(r.records[i].position[a], quantized(c.records[i].position[a])) << i;
      ASSERT_LE(std::abs(r.records[i].position[a] - c.records[i].position[a]), 0.5 * e57::kCoordinateScale + 1e-12);
    }
    ASSERT_EQ(r.records[i].color, c.records[i].color);
    ASSERT_NEAR(r.records[i].intensity, c.records[i].intensity, 0.5 / 65535.0 + 1e-7);
  }
  EXPECT_LE(r.stations[0].pose.max_abs_difference(c.stations[0].pose), 1e-12);
}

TEST(E57, EmptyEntryGivesEmptyCloud) {
  const auto dir = test_util::scratch_dir();
  PointCloud c;
  c.stations.push_back({0, "s", RigidTransform::identity()});
  write_e57(std::span(&c, 1), dir / "e.e57");
  const auto res = read_e57(dir / "e.e57");
  ASSERT_EQ(res.clouds.size(), 1u);
  EXPECT_TRUE(res.clouds[0].empty());
}

TEST(E57, SinglePointIdentity) {
  const auto dir = test_util::scratch_dir();
  PointCloud c;
  c.stations.push_back({0, "s", RigidTransform::identity()});
  c.records.push_back({Vec3(1, 2, 3), {}, 0.0f, 0});
  write_e57(std::span(&c, 1), dir / "one.e57");
  const auto r = read_e57(dir / "one.e57").clouds.at(0);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_NEAR((r.records[0].position - Vec3(1, 2, 3)).cwiseAbs().maxCoeff(), 0.0, e57::kCoordinateScale);
}

TEST(E57, TwoCloudsKeepTheirPoses) {
  const auto dir = test_util::scratch_dir();
  std::vector<PointCloud> cs = {random_cloud(300, 1), random_cloud(500, 2, false, false)};
  cs[1].stations[0] = {0, "south", RigidTransform::from_axis_angle(Vec3::UnitZ(), -1.1, Vec3(-3, 4, 1.45))};
  write_e57(cs, dir / "two.e57");
  const auto res = read_e57(dir / "two.e57");
  ASSERT_EQ(res.clouds.size(), 2u);
  ASSERT_EQ(res.document.data3d_entries.size(), 2u);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(res.clouds[k].size(), cs[k].size());
    EXPECT_LE(res.clouds[k].stations.at(0).pose.max_abs_difference(cs[k].stations[0].pose), 1e-12);
  }
  EXPECT_FALSE(res.clouds[1].has_color);
}

TEST(E57, NanIsRejectedBeforeWriting) {
  const auto dir = test_util::scratch_dir();
  PointCloud c = random_cloud(10, 3);
  c.records[4].position.y() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(write_e57(std::span(&c, 1), dir / "nan.e57"), InvalidArgument);
  EXPECT_FALSE(std::filesystem::exists(dir / "nan.e57"));
}

TEST(E57, EmptyCloudListRejected) {
  const auto dir = test_util::scratch_dir();
  EXPECT_THROW(write_e57({}, dir / "x.e57"), InvalidArgument);
}

TEST(E57, UnwritablePath) {
  const PointCloud c = random_cloud(3, 3);
  EXPECT_THROW(write_e57(std::span(&c, 1), "/nonexistent-dir/x.e57"), IoError);
}

TEST(E57, BadSignature) {
  const auto dir = test_util::scratch_dir();
  write_text(dir / "bad.e57", std::string(2048, 'x'));
  try {
    read_e57(dir / "bad.e57");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("signature"), std::string::npos);
  }
}

TEST(E57, FlippedByteInPageThreeNamesPageThree) {
  const auto dir = test_util::scratch_dir();
  const PointCloud c = random_cloud(10000, 9);
  write_e57(std::span(&c, 1), dir / "c.e57");
  auto bytes = slurp(dir / "c.e57");
  ASSERT_GT(bytes.size(), 4 * e57::kPageSize);
  bytes[3 * e57::kPageSize + 17] ^= 0x40;
  dump(dir / "c.e57", bytes);
  try {
    read_e57(dir / "c.e57");
    FAIL() << "corruption not detected";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum mismatch in page 3"), std::string::npos) << e.what();
  }
}

TEST(E57, EverySingleBitFlipDetected) {
  const auto dir = test_util::scratch_dir();
  const PointCloud c = random_cloud(600, 10);
  write_e57(std::span(&c, 1), dir / "f.e57");
  const auto clean = slurp(dir / "f.e57");
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto bytes = clean;
    const std::size_t at = rng() % bytes.size();
    bytes[at] ^= std::uint8_t(1u << (rng() % 8));
    dump(dir / "g.e57", bytes);
    EXPECT_THROW(read_e57(dir / "g.e57"), FormatError) << "byte " << at;
  }
}

TEST(E57, MissingFile) { EXPECT_THROW(read_e57("/nonexistent/file.e57"), IoError); }

TEST(Ply, BinaryRoundTripIsBitIdentical) {
  const auto dir = test_util::scratch_dir();
  PointCloud c = random_cloud(100000, 11);
  c.stations.push_back({3, "aux", RigidTransform::from_axis_angle(Vec3::UnitX(), 0.3, Vec3(0.1, 0.2, 0.3))});
  for (std::size_t i = 0; i < c.size(); i += 3) c.records[i].station_id = 3;
  write_ply(c, dir / "c.ply", PlyEncoding::BinaryLittleEndian);
  const PointCloud r = read_ply(dir / "c.ply");
  ASSERT_EQ(r.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    ASSERT_EQ(r.records[i].position, c.records[i].position);
    ASSERT_EQ(r.records[i].color, c.records[i].color);
    ASSERT_EQ(r.records[i].intensity, c.records[i].intensity);
    ASSERT_EQ(r.records[i].station_id, c.records[i].station_id);
  }
  ASSERT_EQ(r.stations.size(), 2u);
  EXPECT_EQ(r.stations[1].name, "aux");
  EXPECT_EQ(r.stations[1].pose.max_abs_difference(c.stations[1].pose), 0.0);
  EXPECT_EQ(r.frame, c.frame);
}

TEST(Ply, AsciiRoundTripIsExact) {
  const auto dir = test_util::scratch_dir();
  const PointCloud c = random_cloud(2000, 12);
  write_ply(c, dir / "c.ply", PlyEncoding::Ascii);
  const PointCloud r = read_ply(dir / "c.ply");
  ASSERT_EQ(r.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    ASSERT_EQ(r.records[i].position, c.records[i].position);
    ASSERT_EQ(r.records[i].intensity, c.records[i].intensity);
  }
}

TEST(Ply, AsciiZeroVertices) {
  const auto dir = test_util::scratch_dir();
  write_text(dir / "z.ply", "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\n"
                            "property float z\nend_header\n");
  EXPECT_TRUE(read_ply(dir / "z.ply").empty());
}

TEST(Ply, TruncatedBody) {
  const auto dir = test_util::scratch_dir();
  std::string s = "ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\nproperty float z\n"
                  "end_header\n";
  for (int i = 0; i < 9; ++i) s += "1 2 3\n";
  write_text(dir / "t.ply", s);
  try {
    read_ply(dir / "t.ply");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  // Same for binary: chop the last record.
  const PointCloud c = random_cloud(10, 1, false, false);
  write_ply(c, dir / "b.ply");
  auto bytes = slurp(dir / "b.ply");
  bytes.resize(bytes.size() - 24);
  dump(dir / "b.ply", bytes);
  EXPECT_THROW(read_ply(dir / "b.ply"), FormatError);
}

TEST(Ply, UnknownEncodingKeyword) {
  const auto dir = test_util::scratch_dir();
  write_text(dir / "u.ply", "ply\nformat binary_middle_endian 1.0\nelement vertex 0\nend_header\n");
  try {
    read_ply(dir / "u.ply");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown encoding keyword"), std::string::npos);
  }
}

TEST(Ply, MissingCoordinateProperty) {
  const auto dir = test_util::scratch_dir();
  write_text(dir / "m.ply", "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                            "end_header\n1 2\n");
  EXPECT_THROW(read_ply(dir / "m.ply"), FormatError);
}

TEST(Ply, ForeignFloatFileWithExtraProperties) {
  const auto dir = test_util::scratch_dir();
  write_text(dir / "f.ply", "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 2\nproperty float x\n"
                            "property float y\nproperty float z\nproperty float nx\nproperty uchar red\n"
                            "property uchar green\nproperty uchar blue\nend_header\n0.5 1 2 0 10 20 30\n"
                            "-1 0 4 1 40 50 60\n");
  const PointCloud r = read_ply(dir / "f.ply");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_TRUE(r.has_color);
  EXPECT_EQ(r.records[1].position, Vec3(-1, 0, 4));
  EXPECT_EQ(r.records[1].color, (Rgb{40, 50, 60}));
}

TEST(Ply, MeshRoundTripKeepsLabels) {
  const auto dir = test_util::scratch_dir();
  TriangleMesh m = make_box_mesh(Vec3(0, 0, 0), Vec3(1, 2, 3), "wall");
  m.face_labels[3] = "floor";
  write_mesh_ply(m, dir / "m.ply");
  const TriangleMesh r = read_mesh_ply(dir / "m.ply");
  EXPECT_EQ(r.vertices, m.vertices);
  EXPECT_EQ(r.triangles, m.triangles);
  EXPECT_EQ(r.face_labels, m.face_labels);
}

TEST(CloudStats, EmptyCloud) {
  const auto s = cloud_stats(PointCloud{});
  EXPECT_EQ(s.count, 0u);
  EXPECT_FALSE(s.mean_spacing.has_value());
}

TEST(CloudStats, UnitGridSpacing) {
  PointCloud c;
  c.stations.push_back({});
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 10; ++j) c.records.push_back({Vec3(i, j, 0), {}, 0.0f, 0});
  const auto s = cloud_stats(c);
  EXPECT_EQ(s.count, 121u);
  EXPECT_EQ(s.spacing_sample_size, 121u);
  ASSERT_TRUE(s.mean_spacing.has_value());
  EXPECT_NEAR(*s.mean_spacing, 1.0, 1e-9);
}

TEST(CloudStats, BoundsMatchBruteForce) {
  const PointCloud c = random_cloud(5000, 13);
  const auto s = cloud_stats(c);
  Vec3 lo = c.records[0].position, hi = lo;
  for (const auto& r : c.records) {
    lo = lo.cwiseMin(r.position);
    hi = hi.cwiseMax(r.position);
  }
  EXPECT_EQ(s.bounds.min, lo);
  EXPECT_EQ(s.bounds.max, hi);
  EXPECT_GE(s.spacing_sample_size, 1000u);
  EXPECT_EQ(c.bounds(), compute_bounds(c.records));
}

TEST(PointCloudModel, ValidateRejectsUnknownStation) {
  PointCloud c = random_cloud(5, 1);
  c.records[2].station_id = 9;
  EXPECT_THROW(c.validate(), InvalidArgument);
}
