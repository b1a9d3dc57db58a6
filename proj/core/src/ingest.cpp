#include "ttpmap/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <mutex>
#include <sstream>
#include <unistd.h>

#include "ttpmap/error.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap {

namespace detail {
extern const std::string_view kDefaultStopwordsText;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Tags whose start implicitly closes an open paragraph.
bool closes_paragraph(std::string_view tag) {
  static const std::set<std::string_view> kBlock = {
      "address", "article", "aside", "blockquote", "div",     "dl",  "fieldset", "footer",
      "form",    "h1",      "h2",    "h3",         "h4",      "h5",  "h6",       "header",
      "hr",      "menu",    "nav",   "ol",         "p",       "pre", "section",  "table",
      "ul",      "main",    "figure", "details",   "li",      "body", "html"};
  return kBlock.contains(tag);
}

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x110000) {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string decode_entities(std::string_view s) {
  static const std::map<std::string_view, std::string_view> kNamed = {
      {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    const auto name = s.substr(i + 1, semi - i - 1);
    if (!name.empty() && name[0] == '#') {
      const bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
      const std::string digits(name.substr(hex ? 2 : 1));
      char* end = nullptr;
      const unsigned long cp = std::strtoul(digits.c_str(), &end, hex ? 16 : 10);
      if (!digits.empty() && end && *end == '\0') {
        append_utf8(out, cp);
        i = semi;
        continue;
      }
    } else if (const auto it = kNamed.find(name); it != kNamed.end()) {
      out.append(it->second);
      i = semi;
      continue;
    }
    out.push_back('&');
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string extract_html_text(std::string_view html) {
  std::vector<std::string> paragraphs;
  std::string current;
  bool in_paragraph = false;

  auto close_paragraph = [&] {
    if (in_paragraph) {
      auto text = collapse_whitespace(decode_entities(current));
      if (!text.empty()) paragraphs.push_back(std::move(text));
    }
    current.clear();
    in_paragraph = false;
  };

  std::size_t i = 0;
  while (i < html.size()) {
    if (html.compare(i, 4, "<!--") == 0) {
      const auto end = html.find("-->", i + 4);
      i = end == std::string_view::npos ? html.size() : end + 3;
      continue;
    }
    if (html[i] != '<') {
      if (in_paragraph) current.push_back(html[i]);
      ++i;
      continue;
    }

    // Tag: find its end, honouring quoted attribute values.
    std::size_t j = i + 1;
    char quote = 0;
    while (j < html.size()) {
      const char c = html[j];
      if (quote) {
        if (c == quote) quote = 0;
      } else if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == '>') {
        break;
      }
      ++j;
    }
    const auto body = html.substr(i + 1, j - i - 1);
    i = j < html.size() ? j + 1 : html.size();

    const bool closing = !body.empty() && body[0] == '/';
    std::size_t k = closing ? 1 : 0;
    std::size_t name_end = k;
    while (name_end < body.size() && (std::isalnum(static_cast<unsigned char>(body[name_end])) != 0)) {
      ++name_end;
    }
    const auto name = lower(body.substr(k, name_end - k));
    if (name.empty()) {
      // "<!doctype>", "< 3" and similar: not an element.
      if (in_paragraph && (body.empty() || body[0] != '!')) current.append("<").append(body);
      continue;
    }

    if (!closing && (name == "script" || name == "style")) {
      const auto end_tag = "</" + name;
      std::size_t pos = i;
      while (true) {
        pos = html.find('<', pos);
        if (pos == std::string_view::npos || lower(html.substr(pos, end_tag.size())) == end_tag) break;
        ++pos;
      }
      if (pos == std::string_view::npos) {
        i = html.size();
      } else {
        const auto gt = html.find('>', pos);
        i = gt == std::string_view::npos ? html.size() : gt + 1;
      }
      continue;
    }

    if (name == "p") {
      close_paragraph();
      in_paragraph = !closing;
      continue;
    }
    if (!closing && closes_paragraph(name)) {
      close_paragraph();
      continue;
    }
    if (in_paragraph && name == "br") current.push_back(' ');
  }
  close_paragraph();

  if (paragraphs.empty()) throw EmptyTextError("no paragraph text found in HTML");
  std::string out;
  for (const auto& p : paragraphs) {
    if (!out.empty()) out.push_back(' ');
    out += p;
  }
  return out;
}

// ---------------------------------------------------------------------------

StopwordSet::StopwordSet(std::vector<std::string> words) {
  for (auto& w : words) {
    if (!w.empty()) words_.insert(lower(w));
  }
}

StopwordSet StopwordSet::from_file(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> words;
  for (std::string line; std::getline(in, line);) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    words.push_back(line.substr(first, last - first + 1));
  }
  return StopwordSet(std::move(words));
}

const StopwordSet& StopwordSet::english() {
  static const StopwordSet kEnglish = [] {
    std::istringstream in{std::string(detail::kDefaultStopwordsText)};
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    return StopwordSet(std::move(words));
  }();
  return kEnglish;
}

std::vector<std::string> StopwordSet::words() const {
  std::vector<std::string> out(words_.begin(), words_.end());
  std::ranges::sort(out);
  return out;
}

std::vector<std::string> clean_text(std::string_view raw, const StopwordSet& stopwords) {
  std::vector<std::string> tokens;
  std::string token;
  auto flush = [&] {
    if (token.size() >= 2 && !stopwords.contains(token)) tokens.push_back(token);
    token.clear();
  };
  for (char c : raw) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::isalpha(u)) {
      token.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::string clean_joined(std::string_view raw, const StopwordSet& stopwords) {
  std::string out;
  for (const auto& t : clean_text(raw, stopwords)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Document load_document(const std::filesystem::path& path) {
  const auto content = read_file(path);
  const auto ext = lower(path.extension().string());
  Document doc;
  doc.source = path.string();
  doc.text = (ext == ".html" || ext == ".htm") ? extract_html_text(content) : content;
  doc.doc_id = sha256_hex(doc.text).substr(0, 16);
  return doc;
}

// ---------------------------------------------------------------------------

nlohmann::json LabeledDocument::to_json() const {
  return {{"doc_id", document.doc_id},   {"source", document.source},
          {"text", document.text},       {"tactics", tactic_labels},
          {"techniques", technique_labels}, {"added_at", added_at}};
}

LabeledDocument LabeledDocument::from_json(const nlohmann::json& j) {
  try {
    LabeledDocument d;
    d.document.doc_id = j.at("doc_id").get<std::string>();
    d.document.source = j.value("source", "");
    d.document.text = j.at("text").get<std::string>();
    d.tactic_labels = j.value("tactics", LabelSet{});
    d.technique_labels = j.value("techniques", LabelSet{});
    d.added_at = j.value("added_at", "");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed training entry: ") + e.what());
  }
}

void validate_labels(const LabeledDocument& entry, const Taxonomy& taxonomy) {
  for (const auto& t : entry.tactic_labels) {
    if (!taxonomy.is_tactic(t)) throw ValidationError("unknown tactic id " + t);
  }
  for (const auto& t : entry.technique_labels) {
    if (!taxonomy.is_technique(t)) throw ValidationError("unknown technique id " + t);
  }
}

std::vector<LabeledDocument> TrainingStore::read(const std::filesystem::path& path) {
  std::vector<LabeledDocument> out;
  if (!std::filesystem::exists(path)) return out;
  std::istringstream in(read_file(path));
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(LabeledDocument::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

TrainingStore::TrainingStore(std::filesystem::path path) : path_(std::move(path)) {
  entries_ = read(path_);
  for (const auto& e : entries_) {
    if (!ids_.insert(e.document.doc_id).second) {
      throw ConflictError(path_.string() + ": duplicate doc_id " + e.document.doc_id);
    }
  }
}

std::size_t TrainingStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

bool TrainingStore::contains(const std::string& doc_id) const {
  std::shared_lock lock(mutex_);
  return ids_.contains(doc_id);
}

std::vector<LabeledDocument> TrainingStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return entries_;
}

void TrainingStore::append(LabeledDocument entry, const Taxonomy& taxonomy) {
  if (entry.document.doc_id.empty()) throw ValidationError("entry has no doc_id");
  if (entry.document.text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ValidationError("entry " + entry.document.doc_id + " has empty text");
  }
  validate_labels(entry, taxonomy);
  if (entry.added_at.empty()) entry.added_at = utc_timestamp_now();

  std::unique_lock lock(mutex_);
  if (ids_.contains(entry.document.doc_id)) {
    throw ConflictError("duplicate doc_id " + entry.document.doc_id);
  }
  const auto line = entry.to_json().dump() + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open " + path_.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw Error("append to " + path_.string() + " failed: " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw Error("fsync of " + path_.string() + " failed");
  }
  ::close(fd);
  ids_.insert(entry.document.doc_id);
  entries_.push_back(std::move(entry));
}

// ---------------------------------------------------------------------------

TrainableLabels filter_trainable_labels(std::span<const LabeledDocument> docs,
                                        const Taxonomy& taxonomy, std::size_t min_reports) {
  if (min_reports == 0) throw ConfigError("min_reports must be at least 1");
  std::map<LabelId, std::size_t> positives;
  for (const auto& d : docs) {
    for (const auto& t : d.technique_labels) ++positives[t];
  }
  TrainableLabels out;
  for (const auto& t : taxonomy.tactics()) out.tactics.push_back(t.id);
  for (const auto& t : taxonomy.techniques()) {
    const auto it = positives.find(t.id);
    if (it != positives.end() && it->second >= min_reports) out.techniques.push_back(t.id);
  }
  return out;
}

std::vector<LabeledDocument> bootstrap_corpus(const nlohmann::json& bundle, const Taxonomy& taxonomy,
                                              const std::filesystem::path& corpus_dir,
                                              const StopwordSet& stopwords,
                                              Diagnostics* diagnostics) {
  Diagnostics local;
  Diagnostics& diag = diagnostics ? *diagnostics : local;
  if (!bundle.contains("objects") || !bundle["objects"].is_array()) {
    throw ParseError("bundle is not a JSON object with an 'objects' array");
  }

  std::map<std::string, LabelSet> url_labels;
  auto collect = [&](const nlohmann::json& obj, const LabelId& technique) {
    const auto it = obj.find("external_references");
    if (it == obj.end() || !it->is_array()) return;
    for (const auto& ref : *it) {
      if (!ref.is_object() || ref.value("source_name", "") == "mitre-attack") continue;
      const auto url = ref.value("url", "");
      if (!url.empty()) url_labels[url].insert(technique);
    }
  };

  for (const auto& obj : bundle["objects"]) {
    if (!obj.is_object() || obj.value("revoked", false) || obj.value("x_mitre_deprecated", false)) {
      continue;
    }
    const auto type = obj.value("type", "");
    if (type == "attack-pattern") {
      if (const auto te = taxonomy.technique_for_stix(obj.value("id", ""))) collect(obj, *te);
    } else if (type == "relationship" && obj.value("relationship_type", "") == "uses") {
      if (const auto te = taxonomy.technique_for_stix(obj.value("target_ref", ""))) collect(obj, *te);
    }
  }

  std::vector<LabeledDocument> out;
  for (const auto& [url, techniques] : url_labels) {
    const auto key = sha256_hex(url);
    std::filesystem::path file;
    for (const char* ext : {".txt", ".html"}) {
      const auto candidate = corpus_dir / (key + ext);
      if (std::filesystem::exists(candidate)) {
        file = candidate;
        break;
      }
    }
    if (file.empty()) {
      diag.add("corpus: no local copy of " + url);
      continue;
    }
    std::string text;
    try {
      text = clean_joined(load_document(file).text, stopwords);
    } catch (const EmptyTextError&) {
    }
    if (text.empty()) {
      diag.add("corpus: " + file.string() + " has no usable text");
      continue;
    }
    LabeledDocument entry;
    entry.document = {key.substr(0, 16), url, std::move(text)};
    entry.technique_labels = techniques;
    entry.tactic_labels = taxonomy.implied_tactics(techniques);
    entry.added_at = utc_timestamp_now();
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace ttpmap
