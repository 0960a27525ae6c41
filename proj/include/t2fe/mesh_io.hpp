#pragma once

#include <filesystem>
#include <istream>

#include "t2fe/mesh.hpp"

namespace t2fe {

/// JSON mesh: {"nodes": [[x,y,z],...], "elements": [[8 ids],...],
/// "parts": [label,...], "node_sets": {name: [ids]}}; ids are 0-based.
HexMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const HexMesh& mesh);

/// Whitespace listing for interop, one record per line ('#' starts a comment):
///   node <id> <x> <y> <z>
///   hex  <id> <n0> ... <n7> [part]
///   set  <name> <id> <id> ...
/// Node and element ids must form 0..N-1 (any order).
HexMesh parse_mesh_listing(std::istream& in);
HexMesh read_mesh_listing(const std::filesystem::path& path);

RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const RigidTransform& t);

}  // namespace t2fe
