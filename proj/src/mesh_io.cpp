#include "t2fe/mesh_io.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace t2fe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InputError(std::string("cannot open ") + what + " " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed ") + what + " " + path.string() + ": " + e.what());
  }
}

}  // namespace

HexMesh read_mesh(const fs::path& path) {
  const json j = load_json(path, "mesh");
  HexMesh mesh;
  try {
    for (const auto& p : j.at("nodes")) {
      if (p.size() != 3) throw InputError("mesh node needs 3 coordinates");
      mesh.nodes.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    }
    for (const auto& e : j.at("elements")) {
      if (e.size() != 8) throw InputError("mesh element needs 8 node ids");
      std::array<int, 8> ids{};
      for (int a = 0; a < 8; ++a) ids[a] = e[a].get<int>();
      mesh.elements.push_back(ids);
    }
    if (j.contains("parts")) {
      for (const auto& p : j["parts"]) mesh.parts.push_back(part_from_string(p.get<std::string>()));
    } else {
      mesh.parts.assign(mesh.elements.size(), Part::other);
    }
    if (j.contains("node_sets"))
      for (const auto& [name, ids] : j["node_sets"].items())
        mesh.node_sets[name] = ids.get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw InputError("bad field in mesh " + path.string() + ": " + e.what());
  }
  mesh.validate();
  return mesh;
}

void write_mesh(const fs::path& path, const HexMesh& mesh) {
  json j;
  json nodes = json::array();
  for (const Vec3& p : mesh.nodes) nodes.push_back({p[0], p[1], p[2]});
  json elems = json::array();
  for (const auto& e : mesh.elements) elems.push_back(e);
  json parts = json::array();
  for (Part p : mesh.parts) parts.push_back(to_string(p));
  j["nodes"] = std::move(nodes);
  j["elements"] = std::move(elems);
  j["parts"] = std::move(parts);
  j["node_sets"] = json::object();
  for (const auto& [name, ids] : mesh.node_sets) j["node_sets"][name] = ids;
  std::ofstream out(path);
  if (!out) throw Error("cannot write mesh " + path.string());
  out << j.dump() << '\n';
}

HexMesh parse_mesh_listing(std::istream& in) {
  std::vector<std::optional<Vec3>> nodes;
  std::vector<std::optional<std::pair<std::array<int, 8>, Part>>> elems;
  std::map<std::string, std::vector<int>> sets;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw InputError("mesh listing line " + std::to_string(line_no) + ": " + why);
  };
  auto slot = [&](auto& vec, long id) -> auto& {
    if (id < 0) fail("negative id");
    if (static_cast<std::size_t>(id) >= vec.size()) vec.resize(static_cast<std::size_t>(id) + 1);
    if (vec[static_cast<std::size_t>(id)]) fail("duplicate id " + std::to_string(id));
    return vec[static_cast<std::size_t>(id)];
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    if (kind == "node") {
      long id;
      double x, y, z;
      if (!(ss >> id >> x >> y >> z)) fail("expected: node <id> <x> <y> <z>");
      slot(nodes, id) = Vec3(x, y, z);
    } else if (kind == "hex") {
      long id;
      std::array<int, 8> ids{};
      if (!(ss >> id)) fail("expected: hex <id> <8 node ids> [part]");
      for (int& n : ids)
        if (!(ss >> n)) fail("hex needs 8 node ids");
      std::string part = "other";
      ss >> part;
      slot(elems, id) = std::make_pair(ids, part_from_string(part));
    } else if (kind == "set") {
      std::string name;
      if (!(ss >> name)) fail("expected: set <name> <ids...>");
      int id;
      while (ss >> id) sets[name].push_back(id);
    } else {
      fail("unknown record '" + kind + "'");
    }
  }
  HexMesh mesh;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i]) throw InputError("mesh listing is missing node " + std::to_string(i));
    mesh.nodes.push_back(*nodes[i]);
  }
  for (std::size_t i = 0; i < elems.size(); ++i) {
    if (!elems[i]) throw InputError("mesh listing is missing element " + std::to_string(i));
    mesh.elements.push_back(elems[i]->first);
    mesh.parts.push_back(elems[i]->second);
  }
  mesh.node_sets = std::move(sets);
  mesh.validate();
  return mesh;
}

HexMesh read_mesh_listing(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh listing " + path.string());
  return parse_mesh_listing(in);
}

RigidTransform read_transform(const fs::path& path) {
  const json j = load_json(path, "rigid transform");
  RigidTransform t;
  try {
    const auto& r = j.at("rotation");
    if (r.size() != 9) throw InputError("rotation needs 9 values (row-major)");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) t.rotation(i, k) = r[i * 3 + k].get<double>();
    const auto& tr = j.at("translation_mm");
    if (tr.size() != 3) throw InputError("translation_mm needs 3 values");
    t.translation = Vec3(tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>());
  } catch (const json::exception& e) {
    throw InputError("bad field in rigid transform " + path.string() + ": " + e.what());
  }
  t.validate();
  return t;
}

void write_transform(const fs::path& path, const RigidTransform& t) {
  json j;
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(t.rotation(i, k));
  j["rotation"] = r;
  j["translation_mm"] = {t.translation[0], t.translation[1], t.translation[2]};
  std::ofstream out(path);
  if (!out) throw Error("cannot write rigid transform " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace t2fe
