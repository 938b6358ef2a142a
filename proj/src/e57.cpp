#include "r2vr/e57.hpp"

#include <boost/property_tree/xml_parser.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace r2vr {

namespace e57 {

namespace {

constexpr char kSignature[8] = {'A', 'S', 'T', 'M', '-', 'E', '5', '7'};
constexpr std::size_t kHeaderSize = 48;
constexpr std::size_t kSectionHeaderSize = 32;
constexpr std::size_t kMaxPacket = 65536;

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ 0x82F63B78u : c >> 1;
    t[i] = c;
  }
  return t;
}

}  // namespace

std::uint32_t crc32c(std::span<const std::uint8_t> bytes) {
  static const auto table = make_crc_table();
  std::uint32_t c = 0xFFFFFFFFu;
  for (auto b : bytes) c = table[(c ^ b) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::uint64_t logical_to_physical(std::uint64_t logical) {
  return (logical / kPagePayload) * kPageSize + logical % kPagePayload;
}

std::uint64_t physical_to_logical(std::uint64_t physical) {
  if (physical % kPageSize >= kPagePayload) throw FormatError("e57: offset points into a page checksum");
  return (physical / kPageSize) * kPagePayload + physical % kPageSize;
}

unsigned FieldDescriptor::bit_width() const {
  switch (encoding) {
    case FieldEncoding::Float32: return 32;
    case FieldEncoding::Float64: return 64;
    default: break;
  }
  const auto range = static_cast<std::uint64_t>(maximum) - static_cast<std::uint64_t>(minimum);
  return range == 0 ? 0u : static_cast<unsigned>(std::bit_width(range));
}

}  // namespace e57

namespace {

using namespace e57;
namespace pt = boost::property_tree;

// ---- little-endian helpers ----

template <typename T>
void put_le(std::vector<std::uint8_t>& buf, T v) {
  static_assert(std::endian::native == std::endian::little);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
void poke_le(std::vector<std::uint8_t>& buf, std::size_t at, T v) {
  std::memcpy(buf.data() + at, &v, sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> buf, std::size_t at) {
  if (at + sizeof(T) > buf.size()) throw FormatError("e57: read past end of file");
  T v;
  std::memcpy(&v, buf.data() + at, sizeof(T));
  return v;
}

// ---- bit packing (LSB first) ----

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  void put(std::uint64_t v, unsigned width) {
    for (unsigned done = 0; done < width;) {
      if (fill_ == 0) out_.push_back(0);
      const unsigned take = std::min(width - done, 8u - fill_);
      const auto bits = static_cast<std::uint8_t>((v >> done) & ((1u << take) - 1));
      out_.back() |= static_cast<std::uint8_t>(bits << fill_);
      fill_ = (fill_ + take) % 8;
      done += take;
    }
  }

 private:
  std::vector<std::uint8_t>& out_;
  unsigned fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint64_t get(unsigned width) {
    std::uint64_t v = 0;
    for (unsigned done = 0; done < width;) {
      const std::size_t byte = pos_ / 8;
      if (byte >= in_.size()) throw FormatError("e57: bytestream exhausted");
      const unsigned bit = pos_ % 8;
      const unsigned take = std::min(width - done, 8u - bit);
      v |= static_cast<std::uint64_t>((in_[byte] >> bit) & ((1u << take) - 1)) << done;
      pos_ += take;
      done += take;
    }
    return v;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint64_t stream_bytes(const FieldDescriptor& f, std::uint64_t count) {
  return (count * f.bit_width() + 7) / 8;
}

// ---- XML helpers ----

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string make_guid(std::size_t a, std::uint64_t b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "{7257a72e-0000-4000-8000-%06zx%06llx}", a & 0xFFFFFF,
                static_cast<unsigned long long>(b & 0xFFFFFF));
  return buf;
}

double attr_double(const pt::ptree& node, const std::string& name, double fallback) {
  return node.get<double>("<xmlattr>." + name, fallback);
}

std::int64_t attr_int(const pt::ptree& node, const std::string& name, std::int64_t fallback) {
  return node.get<std::int64_t>("<xmlattr>." + name, fallback);
}

std::string attr_type(const pt::ptree& node) { return node.get<std::string>("<xmlattr>.type", ""); }

}  // namespace

void write_e57(std::span<const PointCloud> clouds, const std::filesystem::path& path) {
  if (clouds.empty()) throw InvalidArgument("write_e57 needs at least one cloud");
  for (const auto& c : clouds) c.validate();

  std::vector<std::uint8_t> logical(kHeaderSize, 0);
  std::vector<Data3DEntry> entries;
  std::vector<std::pair<Bounds, std::size_t>> bounds;

  for (std::size_t ci = 0; ci < clouds.size(); ++ci) {
    const PointCloud& cloud = clouds[ci];
    if (cloud.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw InvalidArgument("write_e57: point count exceeds the 32-bit record index");
    }
    Data3DEntry entry;
    entry.record_count = cloud.size();
    entry.name = cloud.stations.empty() ? "scan_" + std::to_string(ci) : cloud.stations.front().name;
    entry.guid = make_guid(ci, entry.record_count);
    if (!cloud.stations.empty()) {
      entry.pose = cloud.stations.front().pose;
      entry.has_pose = true;
    }

    // Quantize coordinates and derive tight integer bounds.
    std::array<std::vector<std::int64_t>, 3> raw;
    static const char* axis_names[3] = {"cartesianX", "cartesianY", "cartesianZ"};
    constexpr double kLimit = 4.0e18;
    for (int a = 0; a < 3; ++a) {
      raw[a].reserve(cloud.size());
      std::int64_t lo = 0, hi = 0;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double q = std::round(cloud.records[i].position[a] / kCoordinateScale);
        if (std::abs(q) > kLimit) throw InvalidArgument("write_e57: coordinate exceeds scaled-integer range");
        const auto v = static_cast<std::int64_t>(q);
        raw[a].push_back(v);
        if (i == 0) lo = hi = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      entry.fields.push_back({axis_names[a], FieldEncoding::ScaledInteger, lo, hi, kCoordinateScale, 0.0});
    }
    if (cloud.has_color) {
      for (const char* n : {"colorRed", "colorGreen", "colorBlue"})
        entry.fields.push_back({n, FieldEncoding::Integer, 0, 255, 1.0, 0.0});
    }
    if (cloud.has_intensity) {
      entry.fields.push_back({"intensity", FieldEncoding::ScaledInteger, 0, 65535, kIntensityScale, 0.0});
    }

    // Pack each field into its own bytestream.
    std::vector<std::vector<std::uint8_t>> streams(entry.fields.size());
    for (std::size_t f = 0; f < entry.fields.size(); ++f) {
      const auto& fd = entry.fields[f];
      BitWriter bw(streams[f]);
      const unsigned w = fd.bit_width();
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::int64_t v = 0;
        if (f < 3) {
          v = raw[f][i];
        } else if (fd.name == "intensity") {
          v = static_cast<std::int64_t>(std::lround(double(cloud.records[i].intensity) / kIntensityScale));
        } else {
          v = cloud.records[i].color[f - 3];
        }
        bw.put(static_cast<std::uint64_t>(v - fd.minimum), w);
      }
    }

    // Compressed-vector binary section, 4-byte aligned.
    while (logical.size() % 4) logical.push_back(0);
    const std::size_t section_start = logical.size();
    logical.resize(section_start + kSectionHeaderSize, 0);
    logical[section_start] = 1;  // section id: compressed vector
    const std::size_t data_start = logical.size();
    std::vector<std::size_t> cursor(streams.size(), 0);
    const std::size_t nstreams = streams.size();
    const std::size_t per_stream = (kMaxPacket - 6 - 2 * nstreams - 3) / std::max<std::size_t>(nstreams, 1);
    bool any_packet = false;
    for (;;) {
      bool remaining = false;
      for (std::size_t s = 0; s < nstreams; ++s) remaining |= cursor[s] < streams[s].size();
      if (!remaining) break;
      any_packet = true;
      const std::size_t packet_start = logical.size();
      put_le<std::uint8_t>(logical, 1);  // data packet
      put_le<std::uint8_t>(logical, 0);
      put_le<std::uint16_t>(logical, 0);  // length, patched below
      put_le<std::uint16_t>(logical, static_cast<std::uint16_t>(nstreams));
      std::vector<std::size_t> take(nstreams);
      for (std::size_t s = 0; s < nstreams; ++s) {
        take[s] = std::min(per_stream, streams[s].size() - cursor[s]);
        put_le<std::uint16_t>(logical, static_cast<std::uint16_t>(take[s]));
      }
      for (std::size_t s = 0; s < nstreams; ++s) {
        logical.insert(logical.end(), streams[s].begin() + static_cast<long>(cursor[s]),
                       streams[s].begin() + static_cast<long>(cursor[s] + take[s]));
        cursor[s] += take[s];
      }
      while ((logical.size() - packet_start) % 4) logical.push_back(0);
      poke_le<std::uint16_t>(logical, packet_start + 2, static_cast<std::uint16_t>(logical.size() - packet_start - 1));
    }
    poke_le<std::uint64_t>(logical, section_start + 8, logical.size() - section_start);
    poke_le<std::uint64_t>(logical, section_start + 16, any_packet ? logical_to_physical(data_start) : 0);
    poke_le<std::uint64_t>(logical, section_start + 24, 0);
    entry.section_offset = logical_to_physical(section_start);
    bounds.emplace_back(cloud.bounds(), ci);
    entries.push_back(std::move(entry));
  }

  // XML metadata section.
  std::ostringstream x;
  x << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  x << "<e57Root type=\"Structure\" xmlns=\"http://www.astm.org/COMMIT/E57/2010-e57-v1.0\">\n";
  x << "  <formatName type=\"String\">ASTM E57 3D Imaging Data File</formatName>\n";
  x << "  <guid type=\"String\">" << make_guid(clouds.size(), 0xE57) << "</guid>\n";
  x << "  <versionMajor type=\"Integer\">1</versionMajor>\n";
  x << "  <versionMinor type=\"Integer\">0</versionMinor>\n";
  x << "  <coordinateMetadata type=\"String\">right-handed, Z-up, meters</coordinateMetadata>\n";
  x << "  <data3D type=\"Vector\" allowHeterogeneousChildren=\"1\">\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    x << "    <vectorChild type=\"Structure\">\n";
    x << "      <guid type=\"String\">" << xml_escape(e.guid) << "</guid>\n";
    x << "      <name type=\"String\">" << xml_escape(e.name) << "</name>\n";
    if (e.has_pose) {
      const auto q = e.pose.quaternion();
      const auto& t = e.pose.translation();
      x << "      <pose type=\"Structure\">\n";
      x << "        <rotation type=\"Structure\"><w type=\"Float\">" << num(q.w()) << "</w><x type=\"Float\">"
        << num(q.x()) << "</x><y type=\"Float\">" << num(q.y()) << "</y><z type=\"Float\">" << num(q.z())
        << "</z></rotation>\n";
      x << "        <translation type=\"Structure\"><x type=\"Float\">" << num(t.x()) << "</x><y type=\"Float\">"
        << num(t.y()) << "</y><z type=\"Float\">" << num(t.z()) << "</z></translation>\n";
      x << "      </pose>\n";
    }
    const Bounds& b = bounds[i].first;
    if (!b.empty()) {
      x << "      <cartesianBounds type=\"Structure\">";
      const char* names[3] = {"X", "Y", "Z"};
      for (int a = 0; a < 3; ++a) {
        x << "<" << names[a] << "Minimum type=\"Float\">" << num(b.min[a]) << "</" << names[a] << "Minimum>";
        x << "<" << names[a] << "Maximum type=\"Float\">" << num(b.max[a]) << "</" << names[a] << "Maximum>";
      }
      x << "</cartesianBounds>\n";
    }
    const PointCloud& c = clouds[bounds[i].second];
    if (c.has_color) {
      x << "      <colorLimits type=\"Structure\">";
      for (const char* n : {"Red", "Green", "Blue"}) {
        x << "<color" << n << "Minimum type=\"Integer\">0</color" << n << "Minimum>";
        x << "<color" << n << "Maximum type=\"Integer\">255</color" << n << "Maximum>";
      }
      x << "</colorLimits>\n";
    }
    if (c.has_intensity) {
      x << "      <intensityLimits type=\"Structure\"><intensityMinimum type=\"Float\">0</intensityMinimum>"
           "<intensityMaximum type=\"Float\">1</intensityMaximum></intensityLimits>\n";
    }
    x << "      <points type=\"CompressedVector\" fileOffset=\"" << e.section_offset << "\" recordCount=\""
      << e.record_count << "\">\n";
    x << "        <prototype type=\"Structure\">\n";
    for (const auto& f : e.fields) {
      if (f.encoding == FieldEncoding::ScaledInteger) {
        x << "          <" << f.name << " type=\"ScaledInteger\" minimum=\"" << f.minimum << "\" maximum=\""
          << f.maximum << "\" scale=\"" << num(f.scale) << "\" offset=\"" << num(f.offset) << "\"/>\n";
      } else {
        x << "          <" << f.name << " type=\"Integer\" minimum=\"" << f.minimum << "\" maximum=\"" << f.maximum
          << "\"/>\n";
      }
    }
    x << "        </prototype>\n";
    x << "        <codecs type=\"Vector\" allowHeterogeneousChildren=\"1\"/>\n";
    x << "      </points>\n";
    x << "    </vectorChild>\n";
  }
  x << "  </data3D>\n";
  x << "  <images2D type=\"Vector\" allowHeterogeneousChildren=\"1\"/>\n";
  x << "</e57Root>\n";
  const std::string xml = x.str();

  while (logical.size() % 4) logical.push_back(0);
  const std::size_t xml_start = logical.size();
  logical.insert(logical.end(), xml.begin(), xml.end());

  const std::size_t pages = (logical.size() + kPagePayload - 1) / kPagePayload;
  logical.resize(pages * kPagePayload, 0);
  std::memcpy(logical.data(), kSignature, 8);
  poke_le<std::uint32_t>(logical, 8, 1);
  poke_le<std::uint32_t>(logical, 12, 0);
  poke_le<std::uint64_t>(logical, 16, pages * kPageSize);
  poke_le<std::uint64_t>(logical, 24, logical_to_physical(xml_start));
  poke_le<std::uint64_t>(logical, 32, xml.size());
  poke_le<std::uint64_t>(logical, 40, kPageSize);

  std::vector<std::uint8_t> physical(pages * kPageSize);
  for (std::size_t p = 0; p < pages; ++p) {
    std::memcpy(physical.data() + p * kPageSize, logical.data() + p * kPagePayload, kPagePayload);
    const auto crc = crc32c({physical.data() + p * kPageSize, kPagePayload});
    // Checksum is stored big-endian.
    const std::uint8_t be[4] = {static_cast<std::uint8_t>(crc >> 24), static_cast<std::uint8_t>(crc >> 16),
                                static_cast<std::uint8_t>(crc >> 8), static_cast<std::uint8_t>(crc)};
    std::memcpy(physical.data() + p * kPageSize + kPagePayload, be, 4);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(physical.data()), static_cast<std::streamsize>(physical.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

FieldDescriptor parse_field(const std::string& name, const pt::ptree& node) {
  static const std::vector<std::string> supported = {"cartesianX", "cartesianY", "cartesianZ", "colorRed",
                                                     "colorGreen", "colorBlue",  "intensity"};
  if (std::find(supported.begin(), supported.end(), name) == supported.end()) {
    throw FormatError("e57: unsupported field '" + name + "'");
  }
  FieldDescriptor f;
  f.name = name;
  const std::string type = attr_type(node);
  if (type == "ScaledInteger") {
    f.encoding = FieldEncoding::ScaledInteger;
    f.scale = attr_double(node, "scale", 1.0);
    f.offset = attr_double(node, "offset", 0.0);
  } else if (type == "Integer") {
    f.encoding = FieldEncoding::Integer;
  } else if (type == "Float") {
    f.encoding = node.get<std::string>("<xmlattr>.precision", "double") == "single" ? FieldEncoding::Float32
                                                                                     : FieldEncoding::Float64;
  } else {
    throw FormatError("e57: unsupported encoding '" + type + "' for field '" + name + "'");
  }
  if (f.encoding == FieldEncoding::ScaledInteger || f.encoding == FieldEncoding::Integer) {
    f.minimum = attr_int(node, "minimum", std::numeric_limits<std::int64_t>::min());
    f.maximum = attr_int(node, "maximum", std::numeric_limits<std::int64_t>::max());
    if (f.maximum < f.minimum) throw FormatError("e57: field '" + name + "' has maximum < minimum");
    if (name.rfind("color", 0) == 0 && !(f.minimum == 0 && f.maximum == 255)) {
      throw FormatError("e57: unsupported encoding for field '" + name + "' (colour must span 0..255)");
    }
    if (f.encoding == FieldEncoding::Integer && name.rfind("cartesian", 0) == 0) {
      f.scale = 1.0;
    }
  }
  return f;
}

}  // namespace

E57ReadResult read_e57(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0) {
    throw FormatError("e57: bad signature in " + path.string());
  }
  if (file.size() % kPageSize != 0) throw FormatError("e57: file length is not a whole number of pages");

  E57ReadResult result;
  const std::size_t pages = file.size() / kPageSize;
  result.document.page_count = pages;
  std::vector<std::uint8_t> logical(pages * kPagePayload);
  for (std::size_t p = 0; p < pages; ++p) {
    const std::uint8_t* page = file.data() + p * kPageSize;
    const std::uint32_t stored = (std::uint32_t(page[1020]) << 24) | (std::uint32_t(page[1021]) << 16) |
                                 (std::uint32_t(page[1022]) << 8) | std::uint32_t(page[1023]);
    if (crc32c({page, kPagePayload}) != stored) {
      throw FormatError("e57: checksum mismatch in page " + std::to_string(p));
    }
    std::memcpy(logical.data() + p * kPagePayload, page, kPagePayload);
  }
  const std::span<const std::uint8_t> lg(logical);

  const auto file_length = get_le<std::uint64_t>(lg, 16);
  const auto xml_phys = get_le<std::uint64_t>(lg, 24);
  const auto xml_len = get_le<std::uint64_t>(lg, 32);
  const auto page_size = get_le<std::uint64_t>(lg, 40);
  if (page_size != kPageSize || file_length != file.size()) throw FormatError("e57: inconsistent file header");
  const auto xml_log = physical_to_logical(xml_phys);
  if (xml_log + xml_len > logical.size()) throw FormatError("e57: XML section out of range");

  std::istringstream xs(std::string(reinterpret_cast<const char*>(logical.data() + xml_log), xml_len));
  try {
    pt::read_xml(xs, result.document.xml_root);
  } catch (const pt::xml_parser_error& e) {
    throw FormatError(std::string("e57: malformed metadata tree: ") + e.what());
  }
  const auto root = result.document.xml_root.get_child_optional("e57Root");
  if (!root) throw FormatError("e57: malformed metadata tree: missing e57Root");

  const auto data3d = root->get_child_optional("data3D");
  std::uint16_t scan_index = 0;
  if (data3d) {
    for (const auto& [tag, child] : *data3d) {
      if (tag != "vectorChild") continue;
      Data3DEntry entry;
      entry.name = child.get<std::string>("name", "scan_" + std::to_string(scan_index));
      entry.guid = child.get<std::string>("guid", "");
      if (auto pose = child.get_child_optional("pose")) {
        try {
          Eigen::Quaterniond q(pose->get<double>("rotation.w", 1.0), pose->get<double>("rotation.x", 0.0),
                               pose->get<double>("rotation.y", 0.0), pose->get<double>("rotation.z", 0.0));
          Vec3 t(pose->get<double>("translation.x", 0.0), pose->get<double>("translation.y", 0.0),
                 pose->get<double>("translation.z", 0.0));
          entry.pose = RigidTransform::from_quaternion(q, t);
          entry.has_pose = true;
        } catch (const pt::ptree_error& e) {
          throw FormatError(std::string("e57: malformed metadata tree: bad pose: ") + e.what());
        } catch (const InvalidArgument& e) {
          throw FormatError(std::string("e57: malformed metadata tree: bad pose: ") + e.what());
        }
      }
      const auto points = child.get_child_optional("points");
      if (!points || attr_type(*points) != "CompressedVector") {
        throw FormatError("e57: malformed metadata tree: data3D entry lacks a CompressedVector 'points'");
      }
      try {
        entry.record_count = points->get<std::uint64_t>("<xmlattr>.recordCount");
        entry.section_offset = points->get<std::uint64_t>("<xmlattr>.fileOffset");
      } catch (const pt::ptree_error&) {
        throw FormatError("e57: malformed metadata tree: points lacks recordCount/fileOffset");
      }
      const auto proto = points->get_child_optional("prototype");
      if (!proto) throw FormatError("e57: malformed metadata tree: points lacks prototype");
      for (const auto& [fname, fnode] : *proto) {
        if (fname == "<xmlattr>" || fname == "<xmlcomment>") continue;
        entry.fields.push_back(parse_field(fname, fnode));
      }
      if (const auto codecs = points->get_child_optional("codecs")) {
        for (const auto& [cname, _] : *codecs)
          if (cname != "<xmlattr>") throw FormatError("e57: unsupported encoding: non-bitpack codec '" + cname + "'");
      }
      bool has[3] = {false, false, false};
      for (const auto& f : entry.fields)
        for (int a = 0; a < 3; ++a)
          if (f.name == std::string("cartesian") + char('X' + a)) has[a] = true;
      if (!(has[0] && has[1] && has[2])) throw FormatError("e57: entry '" + entry.name + "' lacks cartesian X/Y/Z");

      // Gather bytestreams from data packets.
      const std::size_t nstreams = entry.fields.size();
      std::vector<std::vector<std::uint8_t>> streams(nstreams);
      std::vector<std::uint64_t> need(nstreams);
      for (std::size_t s = 0; s < nstreams; ++s) need[s] = stream_bytes(entry.fields[s], entry.record_count);
      if (entry.record_count > 0) {
        const auto sec = physical_to_logical(entry.section_offset);
        if (get_le<std::uint8_t>(lg, sec) != 1) throw FormatError("e57: expected compressed vector section");
        const auto sec_len = get_le<std::uint64_t>(lg, sec + 8);
        const auto data_phys = get_le<std::uint64_t>(lg, sec + 16);
        const std::uint64_t sec_end = sec + sec_len;
        if (sec_end > logical.size()) throw FormatError("e57: section extends past end of file");
        std::uint64_t at = physical_to_logical(data_phys);
        auto complete = [&] {
          for (std::size_t s = 0; s < nstreams; ++s)
            if (streams[s].size() < need[s]) return false;
          return true;
        };
        while (!complete()) {
          if (at + 4 > sec_end) {
            throw FormatError("e57: entry '" + entry.name + "' declares " + std::to_string(entry.record_count) +
                              " records but its section holds fewer");
          }
          const auto type = get_le<std::uint8_t>(lg, at);
          const std::uint64_t len = std::uint64_t(get_le<std::uint16_t>(lg, at + 2)) + 1;
          if (at + len > sec_end) throw FormatError("e57: packet extends past section end");
          if (type == 1) {
            const auto count = get_le<std::uint16_t>(lg, at + 4);
            if (count != nstreams) throw FormatError("e57: packet bytestream count does not match prototype");
            std::uint64_t data = at + 6 + 2 * std::uint64_t(count);
            for (std::size_t s = 0; s < nstreams; ++s) {
              const auto blen = get_le<std::uint16_t>(lg, at + 6 + 2 * s);
              if (data + blen > at + len) throw FormatError("e57: bytestream overruns packet");
              streams[s].insert(streams[s].end(), lg.begin() + static_cast<long>(data),
                                lg.begin() + static_cast<long>(data + blen));
              data += blen;
            }
          } else if (type != 0 && type != 2) {
            throw FormatError("e57: unknown packet type " + std::to_string(type));
          }
          at += len;
        }
      }
      for (std::size_t s = 0; s < nstreams; ++s) {
        if (streams[s].size() != need[s]) {
          throw FormatError("e57: entry '" + entry.name + "' bytestream '" + entry.fields[s].name +
                            "' length does not match declared record count " + std::to_string(entry.record_count));
        }
      }

      PointCloud cloud;
      ScanStation st;
      st.id = scan_index;
      st.name = entry.name;
      st.pose = entry.pose;
      cloud.stations.push_back(st);
      cloud.records.resize(entry.record_count);
      for (auto& r : cloud.records) r.station_id = scan_index;
      for (std::size_t s = 0; s < nstreams; ++s) {
        const auto& f = entry.fields[s];
        BitReader br(streams[s]);
        const unsigned w = f.bit_width();
        for (std::uint64_t i = 0; i < entry.record_count; ++i) {
          double value = 0.0;
          if (f.encoding == FieldEncoding::Float32) {
            const auto bits = static_cast<std::uint32_t>(br.get(32));
            value = std::bit_cast<float>(bits);
          } else if (f.encoding == FieldEncoding::Float64) {
            value = std::bit_cast<double>(br.get(64));
          } else {
            const auto rawv = static_cast<std::int64_t>(br.get(w) + static_cast<std::uint64_t>(f.minimum));
            value = f.encoding == FieldEncoding::ScaledInteger ? double(rawv) * f.scale + f.offset : double(rawv);
          }
          PointRecord& r = cloud.records[i];
          if (f.name == "cartesianX") r.position.x() = value;
          else if (f.name == "cartesianY") r.position.y() = value;
          else if (f.name == "cartesianZ") r.position.z() = value;
          else if (f.name == "colorRed") r.color[0] = static_cast<std::uint8_t>(value);
          else if (f.name == "colorGreen") r.color[1] = static_cast<std::uint8_t>(value);
          else if (f.name == "colorBlue") r.color[2] = static_cast<std::uint8_t>(value);
          else if (f.name == "intensity") r.intensity = static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
        if (f.name.rfind("color", 0) == 0) cloud.has_color = true;
        if (f.name == "intensity") cloud.has_intensity = true;
      }
      cloud.validate();
      result.clouds.push_back(std::move(cloud));
      result.document.data3d_entries.push_back(std::move(entry));
      ++scan_index;
    }
  }
  return result;
}

}  // namespace r2vr
