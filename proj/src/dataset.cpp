#include "gotham/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "text_util.hpp"

namespace gotham {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<ClassId> LabelTable::class_of(NodeId v) const {
  auto it = entries.find(v);
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

std::vector<NodeId> LabelTable::nodes_of(ClassId c) const {
  std::vector<NodeId> out;
  for (auto [v, cls] : entries)
    if (cls == c) out.push_back(v);
  return out;
}

std::vector<ClassId> LabelTable::classes() const {
  std::set<ClassId> s;
  for (auto& [v, c] : entries) s.insert(c);
  return {s.begin(), s.end()};
}

const Vector& CsdTable::at(ClassId c) const {
  auto it = vectors.find(c);
  if (it == vectors.end()) throw ValidationError("csd: no descriptor for class " + std::to_string(c));
  return it->second;
}

// ---------------------------------------------------------------------------
// StreamSchedule

namespace {

std::vector<ClassId> sorted(std::vector<ClassId> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::vector<ClassId> StreamSchedule::classes_at(std::size_t t) const {
  auto s = seen_classes_at(t);
  auto u = unseen_classes_at(t);
  s.insert(s.end(), u.begin(), u.end());
  return sorted(std::move(s));
}

std::vector<ClassId> StreamSchedule::seen_classes_at(std::size_t t) const {
  std::vector<ClassId> out = base_classes;
  for (std::size_t i = 0; i < std::min(t, sessions.size()); ++i)
    out.insert(out.end(), sessions[i].few_shot.begin(), sessions[i].few_shot.end());
  return sorted(std::move(out));
}

std::vector<ClassId> StreamSchedule::unseen_classes_at(std::size_t t) const {
  std::vector<ClassId> out;
  for (std::size_t i = 0; i < std::min(t, sessions.size()); ++i)
    out.insert(out.end(), sessions[i].zero_shot.begin(), sessions[i].zero_shot.end());
  return sorted(std::move(out));
}

std::vector<ClassId> StreamSchedule::novel_seen_at(std::size_t t) const {
  if (t == 0) return sorted(base_classes);
  if (t > sessions.size()) return {};
  return sorted(sessions[t - 1].few_shot);
}

std::optional<std::size_t> StreamSchedule::session_of(ClassId c) const {
  if (std::find(base_classes.begin(), base_classes.end(), c) != base_classes.end()) return 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    if (std::find(s.few_shot.begin(), s.few_shot.end(), c) != s.few_shot.end() ||
        std::find(s.zero_shot.begin(), s.zero_shot.end(), c) != s.zero_shot.end())
      return i + 1;
  }
  return std::nullopt;
}

bool StreamSchedule::is_zero_shot(ClassId c) const {
  for (const auto& s : sessions)
    if (std::find(s.zero_shot.begin(), s.zero_shot.end(), c) != s.zero_shot.end()) return true;
  return false;
}

void StreamSchedule::validate() const {
  std::set<ClassId> seen;
  auto claim = [&](ClassId c, const std::string& where) {
    if (!seen.insert(c).second)
      throw ValidationError("schedule: class " + std::to_string(c) + " appears more than once (" +
                            where + "); class sets must be pairwise disjoint");
  };
  for (ClassId c : base_classes) claim(c, "base_classes");
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    const std::string where = "session " + std::to_string(i + 1);
    for (ClassId c : s.few_shot) claim(c, where + " few_shot");
    for (ClassId c : s.zero_shot) claim(c, where + " zero_shot");
    if (s.k < 0) throw ValidationError("schedule: negative k in " + where);
    if (!s.few_shot.empty() && s.k < 1)
      throw ValidationError("schedule: " + where + " has few-shot classes but k < 1");
    if (s.few_shot.empty() && s.zero_shot.empty())
      throw ValidationError("schedule: " + where + " introduces no classes");
  }
  if (base_classes.empty()) throw ValidationError("schedule: base_classes is empty");
}

std::string to_string(StreamMode mode) { return mode == StreamMode::gcl ? "gcl" : "gfscil"; }

StreamMode stream_mode_from_string(const std::string& s) {
  if (s == "gfscil") return StreamMode::gfscil;
  if (s == "gcl") return StreamMode::gcl;
  throw ValidationError("schedule: unknown mode '" + s + "' (expected gfscil or gcl)");
}

// ---------------------------------------------------------------------------
// Bundle validation and visibility

void validate_bundle(const DatasetBundle& b) {
  b.schedule.validate();
  if (!b.features || static_cast<std::size_t>(b.features->rows()) != b.num_nodes)
    throw ValidationError("dataset: feature matrix rows do not match node count");
  if (!b.features->allFinite()) throw ValidationError("dataset: non-finite feature value");

  std::set<ClassId> universe;
  for (ClassId c : b.schedule.classes_at(b.schedule.num_sessions())) universe.insert(c);

  for (auto [v, c] : b.labels.entries) {
    if (v < 0 || static_cast<std::size_t>(v) >= b.num_nodes)
      throw ValidationError("labels: node " + std::to_string(v) + " is out of range");
    if (!universe.count(c))
      throw ValidationError("labels: class " + std::to_string(c) + " (node " + std::to_string(v) +
                            ") is not part of the schedule");
  }

  const std::size_t ds = b.csd.dim();
  for (const auto& [c, vec] : b.csd.vectors) {
    if (static_cast<std::size_t>(vec.size()) != ds)
      throw ValidationError("csd: class " + std::to_string(c) + " has dimension " +
                            std::to_string(vec.size()) + ", expected " + std::to_string(ds));
    if (!vec.allFinite()) throw ValidationError("csd: non-finite entry for class " + std::to_string(c));
  }
  if (b.schedule.mode == StreamMode::gcl) {
    for (ClassId c : universe)
      if (!b.csd.has(c))
        throw ValidationError("csd: gcl mode requires a descriptor for class " + std::to_string(c));
  }

  std::set<NodeId> arrived;
  for (std::size_t i = 0; i < b.schedule.sessions.size(); ++i) {
    for (NodeId v : b.schedule.sessions[i].arrivals) {
      if (v < 0 || static_cast<std::size_t>(v) >= b.num_nodes)
        throw ValidationError("schedule: arrival node " + std::to_string(v) + " is out of range");
      if (!arrived.insert(v).second)
        throw ValidationError("schedule: node " + std::to_string(v) + " arrives more than once");
    }
  }
  for (const auto& [u, v] : b.edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= b.num_nodes ||
        static_cast<std::size_t>(v) >= b.num_nodes)
      throw ValidationError("edges: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") is out of range");
  }
}

std::vector<bool> visible_at(const DatasetBundle& b, std::size_t t) {
  if (t > b.schedule.num_sessions())
    throw ValidationError("session index " + std::to_string(t) + " out of range [0, " +
                          std::to_string(b.schedule.num_sessions()) + "]");
  std::vector<bool> vis(b.num_nodes, true);
  for (std::size_t i = 0; i < b.schedule.sessions.size(); ++i)
    for (NodeId v : b.schedule.sessions[i].arrivals) vis[v] = (i < t);
  return vis;
}

GraphSnapshot graph_at(const DatasetBundle& b, std::size_t t) {
  auto vis = visible_at(b, t);
  return GraphSnapshot::build(b.num_nodes, b.edges, b.features, std::move(vis));
}

// ---------------------------------------------------------------------------
// File IO

namespace {

std::ifstream open_input(const fs::path& p) {
  if (!fs::exists(p)) throw ValidationError("missing file: " + p.string());
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open file: " + p.string());
  return in;
}

std::string where(const fs::path& p, std::size_t line) {
  return p.filename().string() + ":" + std::to_string(line);
}

template <typename T>
T parse_or_throw(std::string_view field, const fs::path& p, std::size_t line) {
  T value{};
  if (!detail::parse_number(field, value))
    throw ValidationError(where(p, line) + ": cannot parse '" + std::string(field) + "'");
  return value;
}

Matrix read_features(const fs::path& p) {
  auto in = open_input(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_fields(line, " \t\r");
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_or_throw<double>(f, p, lineno));
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError(where(p, lineno) + ": expected " + std::to_string(rows.front().size()) +
                            " features, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(p.string() + ": no feature rows");
  if (rows.front().empty()) throw ValidationError(p.string() + ": zero-dimensional features");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  if (!m.allFinite()) throw ValidationError(p.string() + ": non-finite feature value");
  return m;
}

std::vector<Edge> read_edges(const fs::path& p, std::size_t n, std::vector<std::string>& warnings) {
  auto in = open_input(p);
  std::set<Edge> directed;
  std::string line;
  std::size_t lineno = 0;
  std::size_t self_loops = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto fields = detail::split_fields(line, "\t \r");
    if (fields.size() != 2) throw ValidationError(where(p, lineno) + ": expected 'u<TAB>v'");
    auto u = parse_or_throw<NodeId>(fields[0], p, lineno);
    auto v = parse_or_throw<NodeId>(fields[1], p, lineno);
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
      throw ValidationError(where(p, lineno) + ": node id out of range [0, " + std::to_string(n) + ")");
    if (u == v) {
      ++self_loops;
      continue;
    }
    directed.emplace(u, v);
  }
  std::size_t one_way = 0;
  std::set<Edge> canonical;
  for (auto [u, v] : directed) {
    if (!directed.count({v, u})) ++one_way;
    canonical.emplace(std::min(u, v), std::max(u, v));
  }
  if (one_way > 0)
    warnings.push_back("edges.tsv: " + std::to_string(one_way) +
                       " edge(s) had no reverse counterpart; graph was symmetrized");
  if (self_loops > 0)
    warnings.push_back("edges.tsv: ignored " + std::to_string(self_loops) +
                       " explicit self-loop(s); self-loops are added for every node");
  return {canonical.begin(), canonical.end()};
}

LabelTable read_labels(const fs::path& p, std::size_t n) {
  auto in = open_input(p);
  LabelTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto fields = detail::split_fields(line, "\t \r");
    if (fields.size() != 2) throw ValidationError(where(p, lineno) + ": expected 'node<TAB>class'");
    auto v = parse_or_throw<NodeId>(fields[0], p, lineno);
    auto c = parse_or_throw<ClassId>(fields[1], p, lineno);
    if (v < 0 || static_cast<std::size_t>(v) >= n)
      throw ValidationError(where(p, lineno) + ": node " + std::to_string(v) + " is out of range");
    if (!t.entries.emplace(v, c).second)
      throw ValidationError(where(p, lineno) + ": node " + std::to_string(v) + " labelled twice");
  }
  return t;
}

CsdTable read_csd(const fs::path& p) {
  auto in = open_input(p);
  CsdTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ValidationError(where(p, lineno) + ": expected 'class<TAB>values'");
    auto c = parse_or_throw<ClassId>(std::string_view(line).substr(0, tab), p, lineno);
    auto fields = detail::split_fields(std::string_view(line).substr(tab + 1), " \t\r");
    Vector vec(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) vec(i) = parse_or_throw<double>(fields[i], p, lineno);
    if (!t.vectors.empty() && static_cast<std::size_t>(vec.size()) != t.dim())
      throw ValidationError(where(p, lineno) + ": descriptor dimension " + std::to_string(vec.size()) +
                            " != " + std::to_string(t.dim()));
    if (!t.vectors.emplace(c, std::move(vec)).second)
      throw ValidationError(where(p, lineno) + ": duplicate descriptor for class " + std::to_string(c));
  }
  return t;
}

std::vector<std::int64_t> int_array(const json& j, const char* key, bool required) {
  if (!j.contains(key)) {
    if (required) throw ValidationError(std::string("schedule.json: missing key '") + key + "'");
    return {};
  }
  return j.at(key).get<std::vector<std::int64_t>>();
}

StreamSchedule read_schedule(const fs::path& p) {
  auto in = open_input(p);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("schedule.json: " + std::string(e.what()));
  }
  StreamSchedule s;
  try {
    s.base_classes = int_array(j, "base_classes", true);
    if (j.contains("sessions")) {
      for (const auto& js : j.at("sessions")) {
        SessionSpec spec;
        spec.few_shot = int_array(js, "few_shot", false);
        spec.zero_shot = int_array(js, "zero_shot", false);
        spec.k = js.value("k", 0);
        spec.arrivals = int_array(js, "arrivals", false);
        s.sessions.push_back(std::move(spec));
      }
    }
    s.mode = stream_mode_from_string(j.value("mode", std::string("gfscil")));
  } catch (const json::exception& e) {
    throw ValidationError("schedule.json: " + std::string(e.what()));
  }
  return s;
}

}  // namespace

DatasetBundle load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory not found: " + dir.string());
  DatasetBundle b;
  b.features = std::make_shared<const Matrix>(read_features(dir / "features.tsv"));
  b.num_nodes = b.features->rows();
  b.edges = read_edges(dir / "edges.tsv", b.num_nodes, b.warnings);
  b.labels = read_labels(dir / "labels.tsv", b.num_nodes);
  if (fs::exists(dir / "csd.tsv")) b.csd = read_csd(dir / "csd.tsv");
  b.schedule = read_schedule(dir / "schedule.json");
  validate_bundle(b);
  return b;
}

void write_dataset(const DatasetBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw ValidationError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("edges.tsv");
    for (auto [u, v] : b.edges) out << u << '\t' << v << '\n' << v << '\t' << u << '\n';
  }
  {
    auto out = open("features.tsv");
    const Matrix& x = *b.features;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (j) out << ' ';
        out << detail::format_double(x(i, j));
      }
      out << '\n';
    }
  }
  {
    auto out = open("labels.tsv");
    for (auto [v, c] : b.labels.entries) out << v << '\t' << c << '\n';
  }
  if (!b.csd.empty()) {
    auto out = open("csd.tsv");
    for (const auto& [c, vec] : b.csd.vectors) {
      out << c << '\t';
      for (Eigen::Index j = 0; j < vec.size(); ++j) {
        if (j) out << ' ';
        out << detail::format_double(vec(j));
      }
      out << '\n';
    }
  } else if (fs::exists(dir / "csd.tsv")) {
    fs::remove(dir / "csd.tsv");
  }
  {
    json j;
    j["base_classes"] = b.schedule.base_classes;
    j["sessions"] = json::array();
    for (const auto& s : b.schedule.sessions) {
      j["sessions"].push_back(
          {{"few_shot", s.few_shot}, {"zero_shot", s.zero_shot}, {"k", s.k}, {"arrivals", s.arrivals}});
    }
    j["mode"] = to_string(b.schedule.mode);
    auto out = open("schedule.json");
    out << j.dump(2) << '\n';
  }
}

}  // namespace gotham
