#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "fairsample/ising.hpp"

namespace fairsample {

using json = nlohmann::json;

// Shortest round-trip decimal form; independent of the C locale.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

inline json instance_to_json(const ProblemInstance& inst) {
  json j;
  j["n_spins"] = inst.n_spins();
  j["couplers"] = json::array();
  for (const auto& c : inst.couplers()) j["couplers"].push_back({c.i, c.j, c.value});
  j["fields"] = json::array();
  for (const auto& f : inst.fields()) j["fields"].push_back({f.site, f.value});
  if (inst.lattice())
    j["metadata"] = {{"L", inst.lattice()->L}, {"periodic", inst.lattice()->periodic}};
  else
    j["metadata"] = nullptr;
  return j;
}

inline ProblemInstance instance_from_json(const json& j) {
  try {
    const int n = j.at("n_spins").get<int>();
    std::vector<Coupler> cs;
    for (const auto& c : j.at("couplers")) {
      require(c.is_array() && c.size() == 3, ErrorKind::invalid_argument, "coupler entries must be [i, j, J]");
      cs.push_back({c[0].get<int>(), c[1].get<int>(), c[2].get<double>()});
    }
    std::vector<LocalField> fs;
    if (j.contains("fields"))
      for (const auto& f : j.at("fields")) {
        require(f.is_array() && f.size() == 2, ErrorKind::invalid_argument, "field entries must be [i, h]");
        fs.push_back({f[0].get<int>(), f[1].get<double>()});
      }
    std::optional<LatticeInfo> lat;
    if (j.contains("metadata") && j["metadata"].is_object() && j["metadata"].contains("L"))
      lat = LatticeInfo{j["metadata"]["L"].get<int>(), j["metadata"].value("periodic", true)};
    return ProblemInstance(n, std::move(cs), std::move(fs), lat);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("malformed instance JSON: ") + e.what());
  }
}

inline json ground_states_to_json(const GroundStateSet& set) {
  json j;
  j["n_spins"] = set.n_spins;
  j["energy"] = set.energy;
  j["gauge"] = set.gauge;
  j["states"] = json::array();
  for (auto s : set.states) j["states"].push_back(to_bitstring(s, set.n_spins));
  return j;
}

/// Accepts states as "udud..." strings or as integers.
inline GroundStateSet ground_states_from_json(const json& j) {
  try {
    GroundStateSet set;
    set.energy = j.at("energy").get<double>();
    set.gauge = j.value("gauge", false);
    set.n_spins = j.value("n_spins", 0);
    for (const auto& s : j.at("states")) {
      if (s.is_string()) {
        const auto str = s.get<std::string>();
        set.n_spins = static_cast<int>(str.size());
        set.states.push_back(from_bitstring(str));
      } else {
        set.states.push_back(SpinConfig{s.get<Word>()});
      }
    }
    std::sort(set.states.begin(), set.states.end());
    return set;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("malformed ground-state JSON: ") + e.what());
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::io, "cannot parse " + path.string() + ": " + e.what());
  }
}

/// Write-temp-then-rename so readers never see a partial file.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp.string());
    out << content;
    require(static_cast<bool>(out), ErrorKind::io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

inline ProblemInstance load_instance(const std::filesystem::path& path) { return instance_from_json(read_json(path)); }

inline void save_instance(const std::filesystem::path& path, const ProblemInstance& inst) {
  write_json(path, instance_to_json(inst));
}

}  // namespace fairsample
