#pragma once

// JSON serialization for datasets. Floating-point numbers are written with 17
// significant digits so a read/write cycle is lossless and byte-stable.

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "multiframe/scene.hpp"

namespace mf {

using Json = nlohmann::ordered_json;

namespace io {

inline void write_number(std::string& out, double x) {
  if (!std::isfinite(x)) fail(ErrorKind::input, "cannot serialize a non-finite number");
  if (x == 0.0) {
    out += "0";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}

/// Indented dump; arrays of scalars stay on one line.
inline void dump(const Json& j, std::string& out, int indent = 0) {
  const std::string pad(indent, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + "  " + Json(it.key()).dump() + ": ";
        dump(it.value(), out, indent + 2);
      }
      out += "\n" + pad + "}";
      return;
    }
    case Json::value_t::array: {
      bool scalars = true;
      for (const auto& e : j) scalars = scalars && !e.is_object() && !e.is_array();
      if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump(j[i], out, indent);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad + "  ";
        dump(j[i], out, indent + 2);
      }
      out += "\n" + pad + "]";
      return;
    }
    case Json::value_t::number_float: write_number(out, j.get<double>()); return;
    default: out += j.dump(); return;
  }
}

inline Json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(static_cast<double>(v[i]));
  return a;
}

inline Json rotation_json(const Rotation& r) {
  Json a = Json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) a.push_back(r(i, k));
  return a;
}

/// Location-aware accessors for schema errors.
class Reader {
 public:
  [[noreturn]] static void bad(const std::string& where, const std::string& what) {
    fail(ErrorKind::parse, where + ": " + what);
  }
  static const Json& field(const Json& j, const std::string& key, const std::string& where) {
    if (!j.is_object()) bad(where, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) bad(where, "missing key '" + key + "'");
    return *it;
  }
  static double number(const Json& j, const std::string& where) {
    if (!j.is_number()) bad(where, "expected a number");
    return j.get<double>();
  }
  template <int N>
  static Eigen::Matrix<double, N, 1> vector(const Json& j, const std::string& where) {
    if (!j.is_array() || j.size() != N) bad(where, "expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = number(j[i], where + "[" + std::to_string(i) + "]");
    return v;
  }
  static std::string string(const Json& j, const std::string& where) {
    if (!j.is_string()) bad(where, "expected a string");
    return j.get<std::string>();
  }
};

}  // namespace io

inline Json pose_to_json(const CameraPose& p) {
  Json j;
  j["origin"] = io::vec(p.origin);
  j["u"] = io::vec(p.u);
  j["v"] = io::vec(p.v);
  j["focal"] = p.focal ? io::vec(*p.focal) : Json(nullptr);
  return j;
}

inline Json motion_to_json(const RigidMotion& m) {
  Json j;
  j["rotation"] = io::rotation_json(m.rotation);
  j["translation"] = io::vec(m.translation);
  return j;
}

inline Json dataset_to_json(const MultiframeDataset& d) {
  Json j;
  j["regime"] = std::string(to_string(d.regime));
  Json frames = Json::array();
  for (const auto& f : d.frames) {
    Json jf;
    jf["id"] = f.id;
    Json pts = Json::object();
    for (const auto& p : f.points) pts[p.label] = io::vec(p.q);
    jf["points"] = pts;
    Json curves = Json::array();
    for (const auto& c : f.curves) {
      Json s = Json::array();
      for (const auto& q : c.samples) s.push_back(io::vec(q));
      curves.push_back(Json{{"id", c.id}, {"samples", s}});
    }
    jf["curves"] = curves;
    if (!f.epipoles.empty()) {
      Json e = Json::object();
      for (const auto& [id, q] : f.epipoles) e[std::to_string(id)] = io::vec(q);
      jf["epipoles"] = e;
    }
    frames.push_back(jf);
  }
  j["frames"] = frames;
  if (d.noise) j["noise"] = Json{{"sigma", d.noise->sigma}, {"seed", d.noise->seed}, {"epipoles_exact", true}};
  if (d.truth) {
    Json t;
    Json pts = Json::object();
    for (const auto& p : d.truth->points) pts[p.label] = io::vec(p.position);
    t["points3d"] = pts;
    if (!d.truth->curves.empty()) {
      Json curves = Json::array();
      for (const auto& c : d.truth->curves) {
        Json s = Json::array();
        for (const auto& x : c.samples) s.push_back(io::vec(x));
        curves.push_back(Json{{"id", c.id}, {"samples", s}});
      }
      t["curves3d"] = curves;
    }
    if (!d.truth->motions.empty()) {
      Json m = Json::array();
      for (const auto& mm : d.truth->motions) m.push_back(motion_to_json(mm));
      t["motions"] = m;
    }
    if (!d.truth->poses.empty()) {
      Json p = Json::array();
      for (const auto& pp : d.truth->poses) p.push_back(pose_to_json(pp));
      t["poses"] = p;
    }
    j["truth"] = t;
  }
  return j;
}

inline std::string dump_json(const Json& j) {
  std::string out;
  io::dump(j, out);
  out += "\n";
  return out;
}

inline std::string write_dataset(const MultiframeDataset& d) { return dump_json(dataset_to_json(d)); }

inline Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::parse, std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what());
  }
}

inline CameraPose pose_from_json(const Json& j, const std::string& where) {
  using io::Reader;
  CameraPose p;
  p.origin = Reader::vector<3>(Reader::field(j, "origin", where), where + ".origin");
  p.u = Reader::vector<3>(Reader::field(j, "u", where), where + ".u");
  p.v = Reader::vector<3>(Reader::field(j, "v", where), where + ".v");
  const Json& f = Reader::field(j, "focal", where);
  if (!f.is_null()) p.focal = Reader::vector<3>(f, where + ".focal");
  try {
    p.validate();
  } catch (const Error& e) {
    Reader::bad(where, e.what());
  }
  return p;
}

inline RigidMotion motion_from_json(const Json& j, const std::string& where) {
  using io::Reader;
  const Json& r = Reader::field(j, "rotation", where);
  if (!r.is_array() || r.size() != 9) Reader::bad(where + ".rotation", "expected 9 numbers (row-major)");
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = Reader::number(r[i], where + ".rotation[" + std::to_string(i) + "]");
  RigidMotion out;
  try {
    out.rotation = Rotation::from_matrix(m);
  } catch (const Error& e) {
    Reader::bad(where + ".rotation", e.what());
  }
  out.translation = Reader::vector<3>(Reader::field(j, "translation", where), where + ".translation");
  return out;
}

inline MultiframeDataset dataset_from_json(const Json& j) {
  using io::Reader;
  MultiframeDataset d;
  d.regime = regime_from_string(Reader::string(Reader::field(j, "regime", "$"), "$.regime"));
  const Json& frames = Reader::field(j, "frames", "$");
  if (!frames.is_array()) Reader::bad("$.frames", "expected an array");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string where = "$.frames[" + std::to_string(i) + "]";
    const Json& jf = frames[i];
    Frame f;
    const Json& id = Reader::field(jf, "id", where);
    if (!id.is_number_integer()) Reader::bad(where + ".id", "expected an integer");
    f.id = id.get<int>();
    const Json& pts = Reader::field(jf, "points", where);
    if (!pts.is_object()) Reader::bad(where + ".points", "expected an object");
    for (auto it = pts.begin(); it != pts.end(); ++it)
      f.points.push_back({it.key(), Reader::vector<2>(it.value(), where + ".points." + it.key())});
    if (auto c = jf.find("curves"); c != jf.end()) {
      if (!c->is_array()) Reader::bad(where + ".curves", "expected an array");
      for (std::size_t k = 0; k < c->size(); ++k) {
        const std::string cw = where + ".curves[" + std::to_string(k) + "]";
        ImageCurve ic;
        ic.id = Reader::string(Reader::field((*c)[k], "id", cw), cw + ".id");
        const Json& s = Reader::field((*c)[k], "samples", cw);
        if (!s.is_array()) Reader::bad(cw + ".samples", "expected an array");
        for (std::size_t m = 0; m < s.size(); ++m)
          ic.samples.push_back(Reader::vector<2>(s[m], cw + ".samples[" + std::to_string(m) + "]"));
        f.curves.push_back(std::move(ic));
      }
    }
    if (auto e = jf.find("epipoles"); e != jf.end()) {
      if (!e->is_object()) Reader::bad(where + ".epipoles", "expected an object");
      for (auto it = e->begin(); it != e->end(); ++it) {
        int other = 0;
        try {
          std::size_t used = 0;
          other = std::stoi(it.key(), &used);
          if (used != it.key().size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          Reader::bad(where + ".epipoles", "key '" + it.key() + "' is not a frame id");
        }
        f.epipoles[other] = Reader::vector<2>(it.value(), where + ".epipoles." + it.key());
      }
    }
    d.frames.push_back(std::move(f));
  }
  if (auto n = j.find("noise"); n != j.end()) {
    NoiseSpec ns;
    ns.sigma = Reader::number(Reader::field(*n, "sigma", "$.noise"), "$.noise.sigma");
    const Json& seed = Reader::field(*n, "seed", "$.noise");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) Reader::bad("$.noise.seed", "expected an integer");
    ns.seed = seed.get<std::uint64_t>();
    d.noise = ns;
  }
  if (auto t = j.find("truth"); t != j.end()) {
    Truth tr;
    const Json& pts = Reader::field(*t, "points3d", "$.truth");
    if (!pts.is_object()) Reader::bad("$.truth.points3d", "expected an object");
    for (auto it = pts.begin(); it != pts.end(); ++it)
      tr.points.push_back({it.key(), Reader::vector<3>(it.value(), "$.truth.points3d." + it.key())});
    if (auto c = t->find("curves3d"); c != t->end()) {
      if (!c->is_array()) Reader::bad("$.truth.curves3d", "expected an array");
      for (std::size_t k = 0; k < c->size(); ++k) {
        const std::string cw = "$.truth.curves3d[" + std::to_string(k) + "]";
        SceneCurve sc;
        sc.id = Reader::string(Reader::field((*c)[k], "id", cw), cw + ".id");
        const Json& s = Reader::field((*c)[k], "samples", cw);
        if (!s.is_array()) Reader::bad(cw + ".samples", "expected an array");
        for (std::size_t m = 0; m < s.size(); ++m)
          sc.samples.push_back(Reader::vector<3>(s[m], cw + ".samples[" + std::to_string(m) + "]"));
        tr.curves.push_back(std::move(sc));
      }
    }
    if (auto m = t->find("motions"); m != t->end()) {
      if (!m->is_array()) Reader::bad("$.truth.motions", "expected an array");
      for (std::size_t k = 0; k < m->size(); ++k)
        tr.motions.push_back(motion_from_json((*m)[k], "$.truth.motions[" + std::to_string(k) + "]"));
    }
    if (auto p = t->find("poses"); p != t->end()) {
      if (!p->is_array()) Reader::bad("$.truth.poses", "expected an array");
      for (std::size_t k = 0; k < p->size(); ++k)
        tr.poses.push_back(pose_from_json((*p)[k], "$.truth.poses[" + std::to_string(k) + "]"));
    }
    d.truth = std::move(tr);
  }
  return d;
}

inline MultiframeDataset read_dataset(const std::string& text) { return dataset_from_json(parse_json(text)); }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::input, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::input, "cannot write '" + path + "'");
  out << text;
}

}  // namespace mf
