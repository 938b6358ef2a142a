#include "r2vr/ply.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace r2vr {

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;

  int find(const std::string& n) const {
    for (std::size_t i = 0; i < properties.size(); ++i)
      if (properties[i].name == n) return static_cast<int>(i);
    return -1;
  }
};

enum class Format { Ascii, BinaryLE, BinaryBE };

struct PlyHeader {
  Format format = Format::Ascii;
  std::vector<std::string> comments;
  std::vector<PlyElement> elements;
};

PlyType parse_type(const std::string& t) {
  static const std::map<std::string, PlyType> types = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  auto it = types.find(t);
  if (it == types.end()) throw FormatError("ply: unknown property type '" + t + "'");
  return it->second;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

PlyHeader parse_header(std::istream& in) {
  PlyHeader h;
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw FormatError("ply: missing magic");
  bool have_format = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw.empty()) continue;
    if (kw == "end_header") {
      if (!have_format) throw FormatError("ply: missing format line");
      return h;
    }
    if (kw == "format") {
      std::string enc;
      ls >> enc;
      if (enc == "ascii") h.format = Format::Ascii;
      else if (enc == "binary_little_endian") h.format = Format::BinaryLE;
      else if (enc == "binary_big_endian") h.format = Format::BinaryBE;
      else throw FormatError("ply: unknown encoding keyword '" + enc + "'");
      have_format = true;
    } else if (kw == "comment" || kw == "obj_info") {
      h.comments.push_back(line.size() > kw.size() + 1 ? line.substr(kw.size() + 1) : std::string{});
    } else if (kw == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      if (ls.fail()) throw FormatError("ply: malformed element line");
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) throw FormatError("ply: property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_type(ct);
        p.type = parse_type(it);
      } else {
        p.type = parse_type(t);
        ls >> p.name;
      }
      if (p.name.empty()) throw FormatError("ply: property without name");
      h.elements.back().properties.push_back(p);
    } else {
      throw FormatError("ply: unexpected header keyword '" + kw + "'");
    }
  }
  throw FormatError("ply: header not terminated");
}

class BodyReader {
 public:
  BodyReader(std::istream& in, Format f) : in_(in), format_(f) {}

  double read(PlyType t) {
    if (format_ == Format::Ascii) return read_ascii();
    unsigned char buf[8];
    const std::size_t n = type_size(t);
    in_.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("ply: truncated body");
    if ((format_ == Format::BinaryBE) == (std::endian::native == std::endian::little)) {
      std::reverse(buf, buf + n);
    }
    switch (t) {
      case PlyType::Int8: return double(std::int8_t(buf[0]));
      case PlyType::UInt8: return double(buf[0]);
      case PlyType::Int16: { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
      case PlyType::UInt16: { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
      case PlyType::Int32: { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::UInt32: { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::Float32: { float v; std::memcpy(&v, buf, 4); return v; }
      case PlyType::Float64: { double v; std::memcpy(&v, buf, 8); return v; }
    }
    return 0.0;
  }

 private:
  double read_ascii() {
    std::string tok;
    if (!(in_ >> tok)) throw FormatError("ply: truncated body");
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) throw FormatError("ply: bad number '" + tok + "'");
    return v;
  }

  std::istream& in_;
  Format format_;
};

class BodyWriter {
 public:
  BodyWriter(std::ostream& out, PlyEncoding e) : out_(out), ascii_(e == PlyEncoding::Ascii) {}

  template <typename T>
  void put(T v) {
    if (ascii_) {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      if (!first_) out_.put(' ');
      out_.write(buf, res.ptr - buf);
      first_ = false;
    } else {
      static_assert(std::endian::native == std::endian::little);
      out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
  }
  void end_row() {
    if (ascii_) out_.put('\n');
    first_ = true;
  }

 private:
  std::ostream& out_;
  bool ascii_;
  bool first_ = true;
};

std::string encode_name(std::string s) {
  for (char& c : s)
    if (c == ' ' || c == '\t' || c == '\n') c = '_';
  return s.empty() ? std::string("_") : s;
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

void write_format_line(std::ostream& out, PlyEncoding e) {
  out << "ply\nformat " << (e == PlyEncoding::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  out << "comment r2vr_version " << kToolVersion << "\n";
}

// Skips every instance of an element the caller does not interpret.
void skip_element(BodyReader& body, const PlyElement& e) {
  for (std::size_t i = 0; i < e.count; ++i)
    for (const auto& p : e.properties) {
      if (p.is_list) {
        const auto n = static_cast<std::size_t>(body.read(p.count_type));
        for (std::size_t j = 0; j < n; ++j) body.read(p.type);
      } else {
        body.read(p.type);
      }
    }
}

}  // namespace

void write_ply(const PointCloud& cloud, const std::filesystem::path& path, PlyEncoding encoding) {
  cloud.validate();
  auto out = open_out(path);
  write_format_line(out, encoding);
  out << "comment r2vr_frame " << (cloud.frame == CloudFrame::World ? "world" : "local") << "\n";
  for (const auto& s : cloud.stations) {
    out << "comment r2vr_station " << s.id << ' ' << encode_name(s.name);
    const Mat3& r = s.pose.rotation();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << ' ' << format_double(r(i, j));
    for (int i = 0; i < 3; ++i) out << ' ' << format_double(s.pose.translation()[i]);
    out << "\n";
  }
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.has_intensity) out << "property float intensity\n";
  out << "property ushort station_id\nend_header\n";
  BodyWriter w(out, encoding);
  for (const auto& r : cloud.records) {
    w.put(r.position.x());
    w.put(r.position.y());
    w.put(r.position.z());
    if (cloud.has_color) {
      if (encoding == PlyEncoding::Ascii) {
        for (auto c : r.color) w.put(int(c));
      } else {
        for (auto c : r.color) w.put(c);
      }
    }
    if (cloud.has_intensity) w.put(r.intensity);
    w.put(r.station_id);
    w.end_row();
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PlyHeader h = parse_header(in);
  PointCloud cloud;
  bool stations_declared = false;
  for (const auto& c : h.comments) {
    std::istringstream cs(c);
    std::string tag;
    cs >> tag;
    if (tag == "r2vr_frame") {
      std::string f;
      cs >> f;
      cloud.frame = f == "world" ? CloudFrame::World : CloudFrame::Local;
    } else if (tag == "r2vr_station") {
      ScanStation s;
      Mat3 r;
      Vec3 t;
      std::string tok;
      cs >> s.id >> s.name;
      auto next = [&]() {
        cs >> tok;
        double v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc()) throw FormatError("ply: malformed station comment");
        return v;
      };
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = next();
      for (int i = 0; i < 3; ++i) t[i] = next();
      if (cs.fail()) throw FormatError("ply: malformed station comment");
      s.pose = RigidTransform(r, t);
      cloud.stations.push_back(s);
      stations_declared = true;
    }
  }

  BodyReader body(in, h.format);
  bool found_vertex = false;
  for (const auto& e : h.elements) {
    if (e.name != "vertex" || found_vertex) {
      skip_element(body, e);
      continue;
    }
    found_vertex = true;
    const int ix = e.find("x"), iy = e.find("y"), iz = e.find("z");
    if (ix < 0 || iy < 0 || iz < 0) throw FormatError("ply: vertex element lacks x/y/z properties");
    const int ir = e.find("red"), ig = e.find("green"), ib = e.find("blue");
    const int ii = e.find("intensity"), is = e.find("station_id");
    cloud.has_color = ir >= 0 && ig >= 0 && ib >= 0;
    cloud.has_intensity = ii >= 0;
    cloud.records.resize(e.count);
    std::vector<double> row(e.properties.size());
    for (std::size_t n = 0; n < e.count; ++n) {
      for (std::size_t p = 0; p < e.properties.size(); ++p) {
        const auto& prop = e.properties[p];
        if (prop.is_list) {
          const auto cnt = static_cast<std::size_t>(body.read(prop.count_type));
          for (std::size_t j = 0; j < cnt; ++j) body.read(prop.type);
          row[p] = 0;
        } else {
          row[p] = body.read(prop.type);
        }
      }
      PointRecord& r = cloud.records[n];
      r.position = {row[ix], row[iy], row[iz]};
      if (cloud.has_color) {
        r.color = {static_cast<std::uint8_t>(row[ir]), static_cast<std::uint8_t>(row[ig]),
                   static_cast<std::uint8_t>(row[ib])};
      }
      if (cloud.has_intensity) r.intensity = static_cast<float>(row[ii]);
      if (is >= 0) r.station_id = static_cast<std::uint16_t>(row[is]);
    }
  }
  if (!found_vertex) throw FormatError("ply: no vertex element");
  if (!stations_declared) {
    std::map<std::uint16_t, bool> seen;
    for (const auto& r : cloud.records) seen[r.station_id] = true;
    if (seen.empty()) seen[0] = true;
    for (const auto& [id, _] : seen) cloud.stations.push_back({id, "station_" + std::to_string(id), {}});
  }
  cloud.validate();
  return cloud;
}

void write_mesh_ply(const TriangleMesh& mesh, const std::filesystem::path& path, PlyEncoding encoding) {
  mesh.validate(0.0);
  std::vector<std::string> labels;
  std::map<std::string, int> label_ids;
  for (const auto& l : mesh.face_labels) {
    if (label_ids.emplace(l, static_cast<int>(labels.size())).second) labels.push_back(l);
  }
  auto out = open_out(path);
  write_format_line(out, encoding);
  for (std::size_t i = 0; i < labels.size(); ++i) out << "comment r2vr_label " << i << ' ' << encode_name(labels[i]) << "\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar uint vertex_indices\n";
  if (!labels.empty()) out << "property int label_id\n";
  out << "end_header\n";
  BodyWriter w(out, encoding);
  for (const auto& v : mesh.vertices) {
    w.put(v.x());
    w.put(v.y());
    w.put(v.z());
    w.end_row();
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (encoding == PlyEncoding::Ascii) w.put(3); else w.put(std::uint8_t{3});
    for (auto idx : mesh.triangles[t]) w.put(idx);
    if (!labels.empty()) w.put(std::int32_t(label_ids.at(mesh.face_labels[t])));
    w.end_row();
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TriangleMesh read_mesh_ply(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PlyHeader h = parse_header(in);
  std::map<int, std::string> labels;
  for (const auto& c : h.comments) {
    std::istringstream cs(c);
    std::string tag, name;
    int id = 0;
    cs >> tag;
    if (tag == "r2vr_label" && (cs >> id >> name)) labels[id] = name;
  }
  TriangleMesh mesh;
  BodyReader body(in, h.format);
  for (const auto& e : h.elements) {
    if (e.name == "vertex") {
      const int ix = e.find("x"), iy = e.find("y"), iz = e.find("z");
      if (ix < 0 || iy < 0 || iz < 0) throw FormatError("ply: vertex element lacks x/y/z properties");
      std::vector<double> row(e.properties.size());
      for (std::size_t n = 0; n < e.count; ++n) {
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
          if (e.properties[p].is_list) throw FormatError("ply: unexpected list in vertex element");
          row[p] = body.read(e.properties[p].type);
        }
        mesh.vertices.emplace_back(row[ix], row[iy], row[iz]);
      }
    } else if (e.name == "face") {
      const int il = e.find("vertex_indices") >= 0 ? e.find("vertex_indices") : e.find("vertex_index");
      const int ilab = e.find("label_id");
      if (il < 0) throw FormatError("ply: face element lacks vertex_indices");
      for (std::size_t n = 0; n < e.count; ++n) {
        std::vector<std::uint32_t> idx;
        int label = -1;
        for (std::size_t p = 0; p < e.properties.size(); ++p) {
          const auto& prop = e.properties[p];
          if (prop.is_list) {
            const auto cnt = static_cast<std::size_t>(body.read(prop.count_type));
            for (std::size_t j = 0; j < cnt; ++j) {
              const double v = body.read(prop.type);
              if (static_cast<int>(p) == il) idx.push_back(static_cast<std::uint32_t>(v));
            }
          } else {
            const double v = body.read(prop.type);
            if (static_cast<int>(p) == ilab) label = static_cast<int>(v);
          }
        }
        // Fan-triangulate polygons.
        for (std::size_t j = 1; j + 1 < idx.size(); ++j) {
          mesh.triangles.push_back({idx[0], idx[j], idx[j + 1]});
          if (ilab >= 0) mesh.face_labels.push_back(labels.count(label) ? labels[label] : std::string{});
        }
      }
    } else {
      skip_element(body, e);
    }
  }
  mesh.validate(0.0);
  return mesh;
}

}  // namespace r2vr
