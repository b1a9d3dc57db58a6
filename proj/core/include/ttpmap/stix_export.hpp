#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ttpmap/attack_kb.hpp"
#include "ttpmap/classifier.hpp"
#include "ttpmap/ingest.hpp"

namespace ttpmap {

/// Namespace for report and bundle identifiers. Fixed so that identical inputs
/// always produce identical ids.
inline constexpr std::string_view kReportNamespace = "6f1d4c9a-3b7e-5a21-9c44-0e8f2d7b1a63";

struct ExportResult {
  nlohmann::json bundle;
  std::vector<std::string> warnings;

  /// Serialised bundle: sorted keys, two-space indent, trailing newline.
  std::string dump() const;
};

/// STIX 2.0 bundle holding a single Report. The report's description is the
/// document text verbatim and its object_refs are the STIX ids of every decided
/// tactic and technique, ordered by ATT&CK id. `published` defaults to the
/// current time when empty. Throws ExportError when a decided label has no STIX
/// id in `taxonomy`.
ExportResult export_stix(const PredictionSet& pred, const Document& doc, const Taxonomy& taxonomy,
                         const std::string& title, std::string published = {});

/// The object_refs of the first report in a bundle. Throws ParseError when the
/// bundle holds no report.
std::vector<std::string> parse_object_refs(const nlohmann::json& bundle);

}  // namespace ttpmap
