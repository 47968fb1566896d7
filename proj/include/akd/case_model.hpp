#pragma once

// Properties, entailment ontology, cases and the deductive closure that turns a
// raw description into its closed boolean-property set.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "akd/errors.hpp"

namespace akd {

using json = nlohmann::json;

class PropertyId {
 public:
  explicit PropertyId(std::string name) : name_(std::move(name)) {
    if (!valid(name_)) throw ValidationError("invalid property name '" + name_ + "'");
  }

  static bool valid(std::string_view name) {
    if (name.empty()) return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
             c == '_' || c == '.' || c == '-';
    });
  }

  const std::string& str() const noexcept { return name_; }

  friend auto operator<=>(const PropertyId&, const PropertyId&) = default;
  friend bool operator==(const PropertyId&, const PropertyId&) = default;

 private:
  std::string name_;
};

using PropertySet = std::set<PropertyId>;
using PropertyIndex = std::uint32_t;

struct Entailment {
  PropertyId premise;
  PropertyId conclusion;
  friend auto operator<=>(const Entailment&, const Entailment&) = default;
  friend bool operator==(const Entailment&, const Entailment&) = default;
};

// Finite acyclic entailment graph. Properties are kept sorted by name, so
// property indices order the same way as names.
class Ontology {
 public:
  Ontology() = default;

  Ontology(std::vector<PropertyId> properties, std::vector<Entailment> entails)
      : properties_(std::move(properties)), entails_(std::move(entails)) {
    std::sort(properties_.begin(), properties_.end());
    if (auto dup = std::adjacent_find(properties_.begin(), properties_.end()); dup != properties_.end())
      throw ValidationError("duplicate property '" + dup->str() + "'");
    std::sort(entails_.begin(), entails_.end());
    if (auto dup = std::adjacent_find(entails_.begin(), entails_.end()); dup != entails_.end())
      throw ValidationError("duplicate entailment " + dup->premise.str() + "->" + dup->conclusion.str());

    successors_.assign(properties_.size(), {});
    for (const auto& e : entails_) {
      const auto from = require(e.premise);
      const auto to = require(e.conclusion);
      successors_[from].push_back(to);
    }
    check_acyclic();
  }

  const std::vector<PropertyId>& properties() const noexcept { return properties_; }
  const std::vector<Entailment>& entails() const noexcept { return entails_; }
  std::size_t size() const noexcept { return properties_.size(); }

  std::optional<PropertyIndex> find(const PropertyId& p) const {
    auto it = std::lower_bound(properties_.begin(), properties_.end(), p);
    if (it == properties_.end() || *it != p) return std::nullopt;
    return static_cast<PropertyIndex>(it - properties_.begin());
  }

  PropertyIndex require(const PropertyId& p) const {
    if (auto idx = find(p)) return *idx;
    throw UnknownPropertyError(p.str());
  }

  bool contains(const PropertyId& p) const { return find(p).has_value(); }
  const PropertyId& property(PropertyIndex i) const { return properties_.at(i); }

  // Sorted, duplicate-free indices reachable from `seeds` (seeds included).
  std::vector<PropertyIndex> closure_indices(std::span<const PropertyIndex> seeds) const {
    std::vector<char> seen(properties_.size(), 0);
    std::vector<PropertyIndex> stack(seeds.begin(), seeds.end());
    std::vector<PropertyIndex> out;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      if (seen[v]) continue;
      seen[v] = 1;
      out.push_back(v);
      for (auto w : successors_[v])
        if (!seen[w]) stack.push_back(w);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<PropertyIndex> indices_of(const PropertySet& props) const {
    std::vector<PropertyIndex> idx;
    idx.reserve(props.size());
    for (const auto& p : props) idx.push_back(require(p));
    return idx;
  }

  PropertySet to_set(std::span<const PropertyIndex> idx) const {
    PropertySet out;
    for (auto i : idx) out.insert(properties_[i]);
    return out;
  }

  friend bool operator==(const Ontology& a, const Ontology& b) {
    return a.properties_ == b.properties_ && a.entails_ == b.entails_;
  }

 private:
  void check_acyclic() const {
    enum : char { kWhite, kGrey, kBlack };
    std::vector<char> colour(properties_.size(), kWhite);
    std::vector<PropertyIndex> path;
    // Iterative DFS; frame = (vertex, next successor slot).
    for (PropertyIndex root = 0; root < properties_.size(); ++root) {
      if (colour[root] != kWhite) continue;
      std::vector<std::pair<PropertyIndex, std::size_t>> frames{{root, 0}};
      colour[root] = kGrey;
      path.assign(1, root);
      while (!frames.empty()) {
        auto& [v, slot] = frames.back();
        if (slot == successors_[v].size()) {
          colour[v] = kBlack;
          frames.pop_back();
          path.pop_back();
          continue;
        }
        const auto w = successors_[v][slot++];
        if (colour[w] == kGrey) {
          std::vector<std::string> cycle;
          auto start = std::find(path.begin(), path.end(), w);
          for (auto it = start; it != path.end(); ++it) cycle.push_back(properties_[*it].str());
          cycle.push_back(properties_[w].str());
          throw CycleError(std::move(cycle));
        }
        if (colour[w] == kWhite) {
          colour[w] = kGrey;
          path.push_back(w);
          frames.emplace_back(w, 0);
        }
      }
    }
  }

  std::vector<PropertyId> properties_;
  std::vector<Entailment> entails_;
  std::vector<std::vector<PropertyIndex>> successors_;
};

inline PropertySet closure(const PropertySet& props, const Ontology& onto) {
  const auto idx = onto.indices_of(props);
  return onto.to_set(onto.closure_indices(idx));
}

struct Case {
  std::string id;
  PropertySet problem;
  PropertySet solution;
  friend bool operator==(const Case&, const Case&) = default;
};

struct FormattedCase {
  PropertySet problem;
  PropertySet solution;
  friend bool operator==(const FormattedCase&, const FormattedCase&) = default;
};

// Problem and solution are closed independently under the same ontology.
inline FormattedCase format_case(const Case& c, const Ontology& onto) {
  return {closure(c.problem, onto), closure(c.solution, onto)};
}

class CaseBase {
 public:
  CaseBase() = default;
  CaseBase(Ontology ontology, std::vector<Case> cases) : ontology_(std::move(ontology)), cases_(std::move(cases)) {
    std::set<std::string_view> ids;
    for (const auto& c : cases_) {
      if (c.id.empty()) throw ValidationError("case with empty id");
      if (!ids.insert(c.id).second) throw ValidationError("duplicate case id '" + c.id + "'");
      for (const auto* facet : {&c.problem, &c.solution})
        for (const auto& p : *facet)
          if (!ontology_.contains(p))
            throw UnknownPropertyError(p.str());
    }
  }

  const Ontology& ontology() const noexcept { return ontology_; }
  const std::vector<Case>& cases() const noexcept { return cases_; }
  std::size_t size() const noexcept { return cases_.size(); }

  const Case* find(std::string_view id) const {
    for (const auto& c : cases_)
      if (c.id == id) return &c;
    return nullptr;
  }

  friend bool operator==(const CaseBase&, const CaseBase&) = default;

 private:
  Ontology ontology_;
  std::vector<Case> cases_;
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline const json& member(const json& obj, const char* key, const char* where) {
  if (!obj.is_object()) throw ParseError(std::string(where) + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string(where) + " lacks \"" + key + "\"");
  return *it;
}

inline std::string as_string(const json& j, const char* where) {
  if (!j.is_string()) throw ParseError(std::string(where) + " must be a string");
  return j.get<std::string>();
}

inline PropertySet property_set(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ParseError(where + " must be an array");
  PropertySet out;
  for (const auto& e : arr) {
    auto name = as_string(e, where.c_str());
    if (!out.insert(PropertyId(name)).second) throw ValidationError("duplicate '" + name + "' in " + where);
  }
  return out;
}

inline json to_json(const PropertySet& s) {
  json arr = json::array();
  for (const auto& p : s) arr.push_back(p.str());
  return arr;
}

inline json parse_document(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("JSON parse error: ") + e.what());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline Ontology ontology_from_json(const json& doc) {
  const auto& props = detail::member(doc, "properties", "ontology");
  if (!props.is_array()) throw ParseError("ontology.properties must be an array");
  std::vector<PropertyId> properties;
  for (const auto& p : props) properties.emplace_back(detail::as_string(p, "ontology.properties[]"));

  std::vector<Entailment> entails;
  if (auto it = doc.find("entails"); it != doc.end()) {
    if (!it->is_array()) throw ParseError("ontology.entails must be an array");
    for (const auto& e : *it) {
      if (!e.is_array() || e.size() != 2) throw ParseError("entailment must be a [premise, conclusion] pair");
      entails.push_back({PropertyId(detail::as_string(e[0], "entailment")),
                         PropertyId(detail::as_string(e[1], "entailment"))});
    }
  }
  return Ontology(std::move(properties), std::move(entails));
}

inline Ontology load_ontology(std::string_view text) { return ontology_from_json(detail::parse_document(text)); }

inline json to_json(const Ontology& onto) {
  json props = json::array();
  for (const auto& p : onto.properties()) props.push_back(p.str());
  json edges = json::array();
  for (const auto& e : onto.entails()) edges.push_back({e.premise.str(), e.conclusion.str()});
  return {{"properties", std::move(props)}, {"entails", std::move(edges)}};
}

inline Case case_from_json(const json& j) {
  Case c;
  c.id = detail::as_string(detail::member(j, "id", "case"), "case.id");
  c.problem = detail::property_set(detail::member(j, "problem", "case"), "case '" + c.id + "' problem");
  c.solution = detail::property_set(detail::member(j, "solution", "case"), "case '" + c.id + "' solution");
  return c;
}

inline json to_json(const Case& c) {
  return {{"id", c.id}, {"problem", detail::to_json(c.problem)}, {"solution", detail::to_json(c.solution)}};
}

inline CaseBase case_base_from_json(const json& doc) {
  auto onto = ontology_from_json(detail::member(doc, "ontology", "case base"));
  const auto& arr = detail::member(doc, "cases", "case base");
  if (!arr.is_array()) throw ParseError("cases must be an array");
  std::vector<Case> cases;
  for (const auto& c : arr) cases.push_back(case_from_json(c));
  return CaseBase(std::move(onto), std::move(cases));
}

inline CaseBase load_case_base(std::string_view text) { return case_base_from_json(detail::parse_document(text)); }

inline CaseBase load_case_base_file(const std::filesystem::path& path) {
  return load_case_base(detail::read_file(path));
}

inline json to_json(const CaseBase& cb) {
  json cases = json::array();
  for (const auto& c : cb.cases()) cases.push_back(to_json(c));
  return {{"ontology", to_json(cb.ontology())}, {"cases", std::move(cases)}};
}

}  // namespace akd
