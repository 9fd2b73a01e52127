// SPDX-License-Identifier: Apache-2.0
//
// JSON loaders for landmark schemes, avatar rigs and retarget maps. Schema
// reference and worked examples live in docs/file-formats.md.
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "posebridge/error.hpp"
#include "posebridge/ik.hpp"
#include "posebridge/retarget.hpp"
#include "posebridge/skeleton.hpp"
#include "posebridge/stereo.hpp"

namespace posebridge {

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "'" + path + "': " + e.what());
  }
}

namespace detail {

inline Vec3 parse_vec3(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw Error(ErrorCode::ParseError, what + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class Fn>
auto wrap_json(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

}  // namespace detail

/// {"name": "...", "landmarks": [{"id": 0, "name": "nose"}, ...]}
inline LandmarkScheme parse_scheme(const nlohmann::json& doc) {
  return detail::wrap_json("landmark scheme", [&] {
    const auto& list = doc.at("landmarks");
    if (!list.is_array()) throw Error(ErrorCode::InvalidScheme, "landmarks must be an array");
    std::vector<std::string> names(list.size());
    std::vector<bool> seen(list.size(), false);
    for (const auto& entry : list) {
      const int id = entry.at("id").get<int>();
      if (id < 0 || id >= static_cast<int>(list.size()) || seen[static_cast<std::size_t>(id)])
        throw Error(ErrorCode::InvalidScheme, "landmark ids must be dense and unique in [0, count)");
      seen[static_cast<std::size_t>(id)] = true;
      names[static_cast<std::size_t>(id)] = entry.at("name").get<std::string>();
    }
    return LandmarkScheme(doc.at("name").get<std::string>(), std::move(names));
  });
}

inline SchemePtr load_scheme(const std::string& path) {
  return std::make_shared<const LandmarkScheme>(parse_scheme(read_json_file(path)));
}

inline JointConstraint parse_constraint(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "ball") return make_ball(detail::parse_vec3(j.at("axis"), "ball axis"), j.at("half_angle").get<double>());
  if (type == "hinge")
    return make_hinge(detail::parse_vec3(j.at("axis"), "hinge axis"), j.at("min").get<double>(),
                      j.at("max").get<double>());
  throw Error(ErrorCode::InvalidConstraint, "unknown constraint type '" + type + "'");
}

/// {"up_axis": "y"|"z", "joints": [{name, parent, length, rest_direction,
/// constraint}], "end_effectors": [...]}
inline AvatarRig parse_rig(const nlohmann::json& doc) {
  return detail::wrap_json("rig", [&] {
    const std::string up = doc.value("up_axis", std::string("y"));
    if (up != "y" && up != "z") throw Error(ErrorCode::InvalidRig, "up_axis must be \"y\" or \"z\"");
    std::vector<RigJointSpec> specs;
    for (const auto& jj : doc.at("joints")) {
      RigJointSpec s;
      s.name = jj.at("name").get<std::string>();
      if (jj.contains("parent") && !jj.at("parent").is_null()) s.parent = jj.at("parent").get<std::string>();
      s.bone_length = jj.value("length", 0.0);
      if (jj.contains("rest_direction")) s.rest_direction = detail::parse_vec3(jj.at("rest_direction"), "rest_direction");
      if (jj.contains("constraint") && !jj.at("constraint").is_null()) s.constraint = parse_constraint(jj.at("constraint"));
      specs.push_back(std::move(s));
    }
    std::vector<std::string> effectors;
    if (doc.contains("end_effectors")) effectors = doc.at("end_effectors").get<std::vector<std::string>>();
    return AvatarRig::create(specs, effectors, up == "z" ? UpAxis::Z : UpAxis::Y);
  });
}

inline AvatarRig load_rig(const std::string& path) { return parse_rig(read_json_file(path)); }

namespace detail {

inline LandmarkRef parse_landmark_ref(const nlohmann::json& j, const LandmarkScheme& scheme) {
  LandmarkRef ref;
  auto add = [&](const std::string& name) {
    auto id = scheme.id_of(name);
    if (!id) throw Error(ErrorCode::InvalidRetargetMap, "unknown landmark '" + name + "' for scheme " + scheme.name());
    ref.ids.push_back(*id);
  };
  if (j.is_string()) {
    add(j.get<std::string>());
  } else if (j.is_array() && !j.empty()) {
    for (const auto& n : j) add(n.get<std::string>());
  } else {
    throw Error(ErrorCode::InvalidRetargetMap, "landmark endpoint must be a name or non-empty list of names");
  }
  return ref;
}

inline std::pair<int, int> parse_joint_pair(const nlohmann::json& j, const AvatarRig& rig) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidRetargetMap, "rig pair must list two joints");
  auto lookup = [&](const nlohmann::json& n) {
    auto i = rig.index_of(n.get<std::string>());
    if (!i) throw Error(ErrorCode::InvalidRetargetMap, "unknown rig joint '" + n.get<std::string>() + "'");
    return *i;
  };
  return {lookup(j[0]), lookup(j[1])};
}

}  // namespace detail

/// {"limbs": [{"name", "basis": {"source": [from, to], "rig": [from, to]},
///             "joint": {"source": [from, to], "rig": [anchor, effector]},
///             "chain_root": optional}]}
/// A source endpoint is a landmark name or a list of names (centroid).
inline RetargetMap parse_retarget_map(const nlohmann::json& doc, const LandmarkScheme& scheme, const AvatarRig& rig) {
  return detail::wrap_json("retarget map", [&] {
    std::vector<LimbEntry> entries;
    std::unordered_set<std::string> names;
    for (const auto& lj : doc.at("limbs")) {
      LimbEntry e;
      e.name = lj.at("name").get<std::string>();
      if (!names.insert(e.name).second) throw Error(ErrorCode::InvalidRetargetMap, "duplicate limb '" + e.name + "'");
      const auto& basis = lj.at("basis");
      const auto& joint = lj.at("joint");
      const auto& bsrc = basis.at("source");
      const auto& jsrc = joint.at("source");
      if (!bsrc.is_array() || bsrc.size() != 2 || !jsrc.is_array() || jsrc.size() != 2)
        throw Error(ErrorCode::InvalidRetargetMap, "limb '" + e.name + "' source pairs must have two endpoints");
      e.basis_from = detail::parse_landmark_ref(bsrc[0], scheme);
      e.basis_to = detail::parse_landmark_ref(bsrc[1], scheme);
      e.joint_from = detail::parse_landmark_ref(jsrc[0], scheme);
      e.joint_to = detail::parse_landmark_ref(jsrc[1], scheme);
      std::tie(e.rig_basis_from, e.rig_basis_to) = detail::parse_joint_pair(basis.at("rig"), rig);
      std::tie(e.anchor, e.end_effector) = detail::parse_joint_pair(joint.at("rig"), rig);
      e.chain_root = e.anchor;
      if (lj.contains("chain_root")) {
        auto root = rig.index_of(lj.at("chain_root").get<std::string>());
        if (!root) throw Error(ErrorCode::InvalidRetargetMap, "unknown chain_root for limb '" + e.name + "'");
        e.chain_root = *root;
      }
      try {
        make_chain(rig, e.chain_root, e.end_effector);
        make_chain(rig, e.anchor, e.end_effector);
      } catch (const Error& err) {
        throw Error(ErrorCode::InvalidRetargetMap, "limb '" + e.name + "': " + err.what());
      }
      entries.push_back(std::move(e));
    }
    if (entries.empty()) throw Error(ErrorCode::InvalidRetargetMap, "map has no limbs");
    return RetargetMap(std::move(entries));
  });
}

inline RetargetMap load_retarget_map(const std::string& path, const LandmarkScheme& scheme, const AvatarRig& rig) {
  return parse_retarget_map(read_json_file(path), scheme, rig);
}

inline CameraPair load_calibration_file(const std::string& path) { return load_calibration(read_json_file(path)); }

}  // namespace posebridge
