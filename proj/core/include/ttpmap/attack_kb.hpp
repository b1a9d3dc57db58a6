#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ttpmap {

using LabelId = std::string;
using LabelSet = std::set<LabelId>;

struct TacticDef {
  LabelId id;  // TA0001
  std::string name;
  std::string stix_id;
  std::string shortname;  // kill-chain phase name, e.g. "initial-access"

  bool operator==(const TacticDef&) const = default;
};

struct TechniqueDef {
  LabelId id;  // T1134
  std::string name;
  std::string stix_id;
  LabelSet tactic_ids;

  bool operator==(const TechniqueDef&) const = default;
};

/// Non-fatal problems found while reading a bundle. One message per line.
struct Diagnostics {
  std::vector<std::string> messages;

  void add(std::string message) { messages.push_back(std::move(message)); }
  void write(std::ostream& out) const;
};

/// Tactics, techniques and the technique -> tactic membership relation.
///
/// Construction validates that ids are unique, tactic ids look like `TA<digits>`,
/// and every technique belongs to at least one declared tactic. Both lists are
/// kept sorted by ATT&CK id.
class Taxonomy {
 public:
  Taxonomy() = default;
  Taxonomy(std::vector<TacticDef> tactics, std::vector<TechniqueDef> techniques,
           std::string version = {});

  const std::vector<TacticDef>& tactics() const { return tactics_; }
  const std::vector<TechniqueDef>& techniques() const { return techniques_; }
  const std::string& version() const { return version_; }

  const TacticDef* find_tactic(const LabelId& id) const;
  const TechniqueDef* find_technique(const LabelId& id) const;
  bool is_tactic(const LabelId& id) const { return find_tactic(id) != nullptr; }
  bool is_technique(const LabelId& id) const { return find_technique(id) != nullptr; }

  /// Member tactics of a technique; empty set for unknown ids.
  const LabelSet& tactics_of(const LabelId& technique) const;

  /// Union of member tactics over `techniques`.
  LabelSet implied_tactics(const LabelSet& techniques) const;

  /// Resolves an attack-pattern STIX id, following folded sub-technique aliases.
  std::optional<LabelId> technique_for_stix(const std::string& stix_id) const;

  /// STIX id of a tactic or technique; empty when unknown.
  std::string stix_id_of(const LabelId& id) const;
  std::string name_of(const LabelId& id) const;

  /// Registers an extra STIX id that resolves to an existing technique.
  void add_alias(const std::string& stix_id, const LabelId& technique);

  nlohmann::json to_json() const;
  static Taxonomy from_json(const nlohmann::json& j);

  bool operator==(const Taxonomy& other) const;

 private:
  std::vector<TacticDef> tactics_;
  std::vector<TechniqueDef> techniques_;
  std::string version_;
  std::map<LabelId, std::size_t> tactic_index_;
  std::map<LabelId, std::size_t> technique_index_;
  std::map<std::string, LabelId> stix_to_technique_;
};

/// Technique usage counts over groups, malware and tools.
struct AssociationStats {
  /// Every taxonomy technique has an entry, zero when no user references it.
  std::map<LabelId, std::size_t> support;
  /// Keyed by (smaller id, larger id); only non-zero pairs are stored.
  std::map<std::pair<LabelId, LabelId>, std::size_t> joint_counts;
  std::size_t total_users = 0;

  bool knows(const LabelId& id) const { return support.contains(id); }
  std::size_t support_of(const LabelId& id) const;
  /// joint(i, i) is support(i).
  std::size_t joint(const LabelId& i, const LabelId& j) const;

  nlohmann::json to_json() const;
  static AssociationStats from_json(const nlohmann::json& j);

  bool operator==(const AssociationStats&) const = default;
};

/// Reads an Enterprise ATT&CK STIX 2.0 bundle.
///
/// Revoked and deprecated objects are dropped. Tactic membership comes from
/// `kill_chain_phases` entries (kill chain "mitre-attack") matched against the
/// `x_mitre_shortname` of tactic objects. Sub-techniques (`T1234.001`) are folded
/// into their parent when the parent is present. Attack-patterns without any
/// resolvable tactic are reported in `diagnostics` and excluded.
Taxonomy parse_bundle(const nlohmann::json& bundle, Diagnostics* diagnostics = nullptr);

/// Loads and parses a bundle file. Throws ParseError on unreadable or malformed JSON.
Taxonomy load_taxonomy(const std::string& path, Diagnostics* diagnostics = nullptr);

nlohmann::json load_bundle_json(const std::string& path);

/// Counts, for every intrusion-set, malware and tool, the distinct techniques it
/// `uses`. Relationships pointing at unknown attack-patterns are skipped and
/// reported.
AssociationStats build_association_stats(const nlohmann::json& bundle, const Taxonomy& taxonomy,
                                         Diagnostics* diagnostics = nullptr);

/// joint(i, j) / support(j), or 0 when support(j) is 0. Throws ValidationError
/// for ids the stats do not know.
double conditional_probability(const AssociationStats& stats, const LabelId& i, const LabelId& j);

}  // namespace ttpmap
