#include "ttpmap/attack_kb.hpp"

#include <algorithm>
#include <ostream>
#include <regex>

#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap {
namespace {

const std::regex kTacticIdPattern{"TA[0-9]+"};
const std::regex kTechniqueIdPattern{"T[0-9]+(\\.[0-9]+)?"};

bool is_inactive(const nlohmann::json& obj) {
  return obj.value("revoked", false) || obj.value("x_mitre_deprecated", false);
}

std::string attack_external_id(const nlohmann::json& obj) {
  const auto it = obj.find("external_references");
  if (it == obj.end() || !it->is_array()) return {};
  for (const auto& ref : *it) {
    if (ref.is_object() && ref.value("source_name", "") == "mitre-attack" &&
        ref.contains("external_id") && ref["external_id"].is_string()) {
      return ref["external_id"].get<std::string>();
    }
  }
  return {};
}

std::string string_field(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  return (it != obj.end() && it->is_string()) ? it->get<std::string>() : std::string{};
}

const nlohmann::json& objects_of(const nlohmann::json& bundle) {
  if (!bundle.is_object() || !bundle.contains("objects") || !bundle["objects"].is_array()) {
    throw ParseError("bundle is not a JSON object with an 'objects' array");
  }
  return bundle["objects"];
}

}  // namespace

void Diagnostics::write(std::ostream& out) const {
  for (const auto& m : messages) out << m << '\n';
}

// ---------------------------------------------------------------------------
// Taxonomy

Taxonomy::Taxonomy(std::vector<TacticDef> tactics, std::vector<TechniqueDef> techniques,
                   std::string version)
    : tactics_(std::move(tactics)), techniques_(std::move(techniques)), version_(std::move(version)) {
  std::ranges::sort(tactics_, {}, &TacticDef::id);
  std::ranges::sort(techniques_, {}, &TechniqueDef::id);

  for (std::size_t i = 0; i < tactics_.size(); ++i) {
    const auto& t = tactics_[i];
    if (!std::regex_match(t.id, kTacticIdPattern)) {
      throw ValidationError("tactic id '" + t.id + "' does not match TA<digits>");
    }
    if (!tactic_index_.emplace(t.id, i).second) {
      throw ValidationError("duplicate tactic id " + t.id);
    }
  }
  for (std::size_t i = 0; i < techniques_.size(); ++i) {
    const auto& t = techniques_[i];
    if (t.id.empty() || tactic_index_.contains(t.id)) {
      throw ValidationError("invalid technique id '" + t.id + "'");
    }
    if (!technique_index_.emplace(t.id, i).second) {
      throw ValidationError("duplicate technique id " + t.id);
    }
    if (t.tactic_ids.empty()) {
      throw ValidationError("technique " + t.id + " has no tactic");
    }
    for (const auto& ta : t.tactic_ids) {
      if (!tactic_index_.contains(ta)) {
        throw ValidationError("technique " + t.id + " references undeclared tactic " + ta);
      }
    }
    if (!t.stix_id.empty()) stix_to_technique_[t.stix_id] = t.id;
  }
}

const TacticDef* Taxonomy::find_tactic(const LabelId& id) const {
  const auto it = tactic_index_.find(id);
  return it == tactic_index_.end() ? nullptr : &tactics_[it->second];
}

const TechniqueDef* Taxonomy::find_technique(const LabelId& id) const {
  const auto it = technique_index_.find(id);
  return it == technique_index_.end() ? nullptr : &techniques_[it->second];
}

const LabelSet& Taxonomy::tactics_of(const LabelId& technique) const {
  static const LabelSet kEmpty;
  const auto* t = find_technique(technique);
  return t ? t->tactic_ids : kEmpty;
}

LabelSet Taxonomy::implied_tactics(const LabelSet& techniques) const {
  LabelSet out;
  for (const auto& te : techniques) {
    const auto& ta = tactics_of(te);
    out.insert(ta.begin(), ta.end());
  }
  return out;
}

std::optional<LabelId> Taxonomy::technique_for_stix(const std::string& stix_id) const {
  const auto it = stix_to_technique_.find(stix_id);
  if (it == stix_to_technique_.end()) return std::nullopt;
  return it->second;
}

std::string Taxonomy::stix_id_of(const LabelId& id) const {
  if (const auto* t = find_tactic(id)) return t->stix_id;
  if (const auto* t = find_technique(id)) return t->stix_id;
  return {};
}

std::string Taxonomy::name_of(const LabelId& id) const {
  if (const auto* t = find_tactic(id)) return t->name;
  if (const auto* t = find_technique(id)) return t->name;
  return {};
}

void Taxonomy::add_alias(const std::string& stix_id, const LabelId& technique) {
  if (!is_technique(technique)) {
    throw ValidationError("alias target " + technique + " is not a technique");
  }
  stix_to_technique_.emplace(stix_id, technique);
}

nlohmann::json Taxonomy::to_json() const {
  nlohmann::json j;
  j["version"] = version_;
  auto& ta = j["tactics"] = nlohmann::json::array();
  for (const auto& t : tactics_) {
    ta.push_back({{"id", t.id}, {"name", t.name}, {"stix_id", t.stix_id}, {"shortname", t.shortname}});
  }
  auto& te = j["techniques"] = nlohmann::json::array();
  for (const auto& t : techniques_) {
    te.push_back({{"id", t.id}, {"name", t.name}, {"stix_id", t.stix_id}, {"tactics", t.tactic_ids}});
  }
  auto& aliases = j["aliases"] = nlohmann::json::object();
  for (const auto& [stix, id] : stix_to_technique_) {
    if (stix_id_of(id) != stix) aliases[stix] = id;
  }
  return j;
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
  try {
    std::vector<TacticDef> tactics;
    for (const auto& t : j.at("tactics")) {
      tactics.push_back({t.at("id").get<std::string>(), t.value("name", ""), t.value("stix_id", ""),
                         t.value("shortname", "")});
    }
    std::vector<TechniqueDef> techniques;
    for (const auto& t : j.at("techniques")) {
      techniques.push_back({t.at("id").get<std::string>(), t.value("name", ""), t.value("stix_id", ""),
                            t.at("tactics").get<LabelSet>()});
    }
    Taxonomy tax(std::move(tactics), std::move(techniques), j.value("version", ""));
    if (j.contains("aliases")) {
      for (const auto& [stix, id] : j["aliases"].items()) tax.add_alias(stix, id.get<std::string>());
    }
    return tax;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed taxonomy: ") + e.what());
  }
}

bool Taxonomy::operator==(const Taxonomy& other) const {
  return tactics_ == other.tactics_ && techniques_ == other.techniques_ &&
         version_ == other.version_ && stix_to_technique_ == other.stix_to_technique_;
}

// ---------------------------------------------------------------------------
// Bundle parsing

Taxonomy parse_bundle(const nlohmann::json& bundle, Diagnostics* diagnostics) {
  Diagnostics local;
  Diagnostics& diag = diagnostics ? *diagnostics : local;
  const auto& objects = objects_of(bundle);

  std::vector<TacticDef> tactics;
  std::map<std::string, LabelId> phase_to_tactic;
  std::set<LabelId> seen_tactics;
  for (const auto& obj : objects) {
    if (!obj.is_object() || string_field(obj, "type") != "x-mitre-tactic" || is_inactive(obj)) {
      continue;
    }
    const auto id = attack_external_id(obj);
    if (!std::regex_match(id, kTacticIdPattern)) {
      diag.add("tactic " + string_field(obj, "id") + ": missing or malformed ATT&CK id '" + id + "'");
      continue;
    }
    if (!seen_tactics.insert(id).second) {
      diag.add("tactic " + id + ": duplicate definition ignored");
      continue;
    }
    const auto shortname = string_field(obj, "x_mitre_shortname");
    tactics.push_back({id, string_field(obj, "name"), string_field(obj, "id"), shortname});
    if (!shortname.empty()) phase_to_tactic[shortname] = id;
  }

  struct Pattern {
    TechniqueDef def;
    bool sub = false;
  };
  std::map<LabelId, Pattern> patterns;
  for (const auto& obj : objects) {
    if (!obj.is_object() || string_field(obj, "type") != "attack-pattern" || is_inactive(obj)) {
      continue;
    }
    const auto stix_id = string_field(obj, "id");
    const auto id = attack_external_id(obj);
    if (!std::regex_match(id, kTechniqueIdPattern)) {
      diag.add("attack-pattern " + stix_id + ": missing or malformed ATT&CK id '" + id + "'");
      continue;
    }
    LabelSet member;
    if (const auto it = obj.find("kill_chain_phases"); it != obj.end() && it->is_array()) {
      for (const auto& phase : *it) {
        if (!phase.is_object() || phase.value("kill_chain_name", "") != "mitre-attack") continue;
        const auto name = phase.value("phase_name", "");
        const auto found = phase_to_tactic.find(name);
        if (found == phase_to_tactic.end()) {
          diag.add("attack-pattern " + id + ": unknown kill-chain phase '" + name + "'");
          continue;
        }
        member.insert(found->second);
      }
    }
    if (member.empty()) {
      diag.add("attack-pattern " + id + ": no resolvable tactic, excluded");
      continue;
    }
    if (patterns.contains(id)) {
      diag.add("attack-pattern " + id + ": duplicate definition ignored");
      continue;
    }
    const bool sub = id.find('.') != std::string::npos;
    patterns.emplace(id, Pattern{{id, string_field(obj, "name"), stix_id, member}, sub});
  }

  // Fold sub-techniques into their parents.
  std::vector<std::pair<std::string, LabelId>> aliases;
  for (auto it = patterns.begin(); it != patterns.end();) {
    if (!it->second.sub) {
      ++it;
      continue;
    }
    const auto parent_id = it->first.substr(0, it->first.find('.'));
    const auto parent = patterns.find(parent_id);
    if (parent == patterns.end()) {
      diag.add("sub-technique " + it->first + ": parent " + parent_id + " absent, kept as its own label");
      ++it;
      continue;
    }
    parent->second.def.tactic_ids.insert(it->second.def.tactic_ids.begin(),
                                         it->second.def.tactic_ids.end());
    aliases.emplace_back(it->second.def.stix_id, parent_id);
    it = patterns.erase(it);
  }

  std::vector<TechniqueDef> techniques;
  techniques.reserve(patterns.size());
  for (auto& [id, p] : patterns) techniques.push_back(std::move(p.def));

  Taxonomy tax(std::move(tactics), std::move(techniques), sha256_hex(bundle.dump()).substr(0, 16));
  for (const auto& [stix, parent] : aliases) tax.add_alias(stix, parent);
  return tax;
}

nlohmann::json load_bundle_json(const std::string& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

Taxonomy load_taxonomy(const std::string& path, Diagnostics* diagnostics) {
  return parse_bundle(load_bundle_json(path), diagnostics);
}

// ---------------------------------------------------------------------------
// Association statistics

std::size_t AssociationStats::support_of(const LabelId& id) const {
  const auto it = support.find(id);
  return it == support.end() ? 0 : it->second;
}

std::size_t AssociationStats::joint(const LabelId& i, const LabelId& j) const {
  if (i == j) return support_of(i);
  const auto key = i < j ? std::make_pair(i, j) : std::make_pair(j, i);
  const auto it = joint_counts.find(key);
  return it == joint_counts.end() ? 0 : it->second;
}

nlohmann::json AssociationStats::to_json() const {
  nlohmann::json j;
  j["total_users"] = total_users;
  j["support"] = support;
  auto& pairs = j["joint"] = nlohmann::json::array();
  for (const auto& [key, count] : joint_counts) pairs.push_back({key.first, key.second, count});
  return j;
}

AssociationStats AssociationStats::from_json(const nlohmann::json& j) {
  try {
    AssociationStats s;
    s.total_users = j.at("total_users").get<std::size_t>();
    s.support = j.at("support").get<std::map<LabelId, std::size_t>>();
    for (const auto& p : j.at("joint")) {
      auto a = p.at(0).get<LabelId>();
      auto b = p.at(1).get<LabelId>();
      if (b < a) std::swap(a, b);
      s.joint_counts[{a, b}] = p.at(2).get<std::size_t>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed association stats: ") + e.what());
  }
}

AssociationStats build_association_stats(const nlohmann::json& bundle, const Taxonomy& taxonomy,
                                         Diagnostics* diagnostics) {
  Diagnostics local;
  Diagnostics& diag = diagnostics ? *diagnostics : local;
  const auto& objects = objects_of(bundle);

  std::set<std::string> inactive;
  for (const auto& obj : objects) {
    if (obj.is_object() && is_inactive(obj)) inactive.insert(string_field(obj, "id"));
  }

  auto is_user = [](const std::string& ref) {
    return ref.starts_with("intrusion-set--") || ref.starts_with("malware--") ||
           ref.starts_with("tool--");
  };

  std::map<std::string, LabelSet> used;  // user stix id -> techniques
  std::size_t skipped = 0;
  for (const auto& obj : objects) {
    if (!obj.is_object() || string_field(obj, "type") != "relationship" || is_inactive(obj) ||
        string_field(obj, "relationship_type") != "uses") {
      continue;
    }
    const auto source = string_field(obj, "source_ref");
    const auto target = string_field(obj, "target_ref");
    if (!is_user(source) || !target.starts_with("attack-pattern--") || inactive.contains(source)) {
      continue;
    }
    const auto technique = taxonomy.technique_for_stix(target);
    if (!technique) {
      ++skipped;
      continue;
    }
    used[source].insert(*technique);
  }
  if (skipped > 0) {
    diag.add("association stats: skipped " + std::to_string(skipped) +
             " uses relationship(s) to unknown attack-patterns");
  }

  AssociationStats stats;
  for (const auto& t : taxonomy.techniques()) stats.support[t.id] = 0;
  for (const auto& [user, techniques] : used) {
    if (techniques.empty()) continue;
    ++stats.total_users;
    for (auto a = techniques.begin(); a != techniques.end(); ++a) {
      ++stats.support[*a];
      for (auto b = std::next(a); b != techniques.end(); ++b) ++stats.joint_counts[{*a, *b}];
    }
  }
  return stats;
}

double conditional_probability(const AssociationStats& stats, const LabelId& i, const LabelId& j) {
  if (!stats.knows(i)) throw ValidationError("unknown technique " + i);
  if (!stats.knows(j)) throw ValidationError("unknown technique " + j);
  const auto sj = stats.support_of(j);
  if (sj == 0) return 0.0;
  return static_cast<double>(stats.joint(i, j)) / static_cast<double>(sj);
}

}  // namespace ttpmap
