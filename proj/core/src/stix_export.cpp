#include "ttpmap/stix_export.hpp"

#include <algorithm>

#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap {

std::string ExportResult::dump() const { return bundle.dump(2) + "\n"; }

ExportResult export_stix(const PredictionSet& pred, const Document& doc, const Taxonomy& taxonomy,
                         const std::string& title, std::string published) {
  if (published.empty()) published = utc_timestamp_now();

  std::vector<LabelId> decided;
  for (const auto& set : {pred.decided_tactics(), pred.decided_techniques()}) {
    decided.insert(decided.end(), set.begin(), set.end());
  }
  std::ranges::sort(decided);

  ExportResult out;
  auto refs = nlohmann::json::array();
  for (const auto& id : decided) {
    const auto stix = taxonomy.stix_id_of(id);
    if (stix.empty()) throw ExportError("decided label " + id + " has no STIX id in the taxonomy");
    refs.push_back(stix);
  }
  if (decided.empty()) out.warnings.push_back("no label decided; report has empty object_refs");

  const auto key = title + "\n" + published;
  // nlohmann::json's default object type is std::map, so keys serialise sorted.
  nlohmann::json report = {
      {"type", "report"},
      {"id", "report--" + uuid_v5(kReportNamespace, key)},
      {"created", published},
      {"modified", published},
      {"published", published},
      {"name", title},
      {"description", doc.text},
      {"labels", {"threat-report"}},
      {"object_refs", std::move(refs)},
  };
  out.bundle = {
      {"type", "bundle"},
      {"id", "bundle--" + uuid_v5(kReportNamespace, "bundle\n" + key)},
      {"spec_version", "2.0"},
      {"objects", nlohmann::json::array({std::move(report)})},
  };
  return out;
}

std::vector<std::string> parse_object_refs(const nlohmann::json& bundle) {
  if (bundle.contains("objects") && bundle["objects"].is_array()) {
    for (const auto& obj : bundle["objects"]) {
      if (obj.value("type", "") == "report") {
        return obj.value("object_refs", std::vector<std::string>{});
      }
    }
  }
  throw ParseError("bundle contains no report object");
}

}  // namespace ttpmap
