#include "ttpmap_app/service.hpp"

#include <httplib.h>

#include <utility>

#include "ttpmap/error.hpp"
#include "ttpmap/stix_export.hpp"
#include "ttpmap/training.hpp"
#include "ttpmap/util.hpp"

namespace ttpmap::app {

using nlohmann::json;

namespace {

Service::Reply error_reply(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

Service::Reply ok(int status, const json& body) { return {status, body.dump()}; }

std::string text_id(const std::string& text) { return sha256_hex(text).substr(0, 16); }

// Parses a request body into an object; nullopt on anything else.
std::optional<json> parse_object(const std::string& body) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

// A list of label ids; throws ParseError for any other shape.
LabelSet label_list(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (!v.is_array()) throw ParseError(std::string(key) + " must be an array of label ids");
  LabelSet out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ParseError(std::string(key) + " must be an array of label ids");
    out.insert(e.get<std::string>());
  }
  return out;
}

}  // namespace

std::string model_version(const ModelBundle& bundle) { return bundle.trained_at; }

json predict_response(const ModelBundle& bundle, const PredictionSet& pred) {
  auto list = [&](const std::vector<Prediction>& ps) {
    auto arr = json::array();
    for (const auto& p : ps) {
      arr.push_back({{"label_id", p.label_id},
                     {"name", bundle.taxonomy.name_of(p.label_id)},
                     {"confidence", p.confidence},
                     {"decided", p.decided}});
    }
    return arr;
  };
  return {{"doc_id", pred.doc_id},
          {"tactics", list(pred.tactics)},
          {"techniques", list(pred.techniques)},
          {"model_version", model_version(bundle)}};
}

Service::Service(ModelBundle bundle, ServiceOptions options)
    : options_(std::move(options)),
      store_(options_.store_path),
      bundle_(std::make_shared<const ModelBundle>(std::move(bundle))) {
  if (!options_.trainer) options_.trainer = train_bundle;
}

Service::~Service() {
  if (retrain_thread_.joinable()) retrain_thread_.join();
}

std::shared_ptr<const ModelBundle> Service::bundle() const {
  std::lock_guard lock(bundle_mutex_);
  return bundle_;
}

void Service::wait_for_retrain() {
  std::unique_lock lock(retrain_mutex_);
  retrain_done_.wait(lock, [&] { return !retraining_.load(); });
}

void Service::remember(const Document& doc, const std::string& title) {
  std::lock_guard lock(cache_mutex_);
  if (cache_.contains(doc.doc_id)) return;
  cache_.emplace(doc.doc_id, Remembered{doc, title});
  cache_order_.push_back(doc.doc_id);
  while (cache_order_.size() > options_.export_cache) {
    cache_.erase(cache_order_.front());
    cache_order_.pop_front();
  }
}

std::optional<Service::Remembered> Service::recall(const std::string& doc_id) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(doc_id); it != cache_.end()) return it->second;
  }
  for (const auto& e : store_.snapshot()) {
    if (e.document.doc_id == doc_id) return Remembered{e.document, {}};
  }
  return std::nullopt;
}

Service::Reply Service::predict(const std::string& body) {
  auto req = parse_object(body);
  if (!req) return error_reply(400, "request body must be a JSON object");
  const auto text = req->value("text", json()).is_string() ? req->at("text").get<std::string>() : "";
  if (text.empty()) return error_reply(400, "text must be a non-empty string");
  const auto title = req->value("title", json()).is_string() ? req->at("title").get<std::string>() : "";

  const auto snapshot = bundle();
  Document doc{text_id(text), "api", text};
  try {
    const auto pred = classify(*snapshot, doc);
    remember(doc, title);
    return ok(200, predict_response(*snapshot, pred));
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

Service::Reply Service::feedback(const std::string& body) {
  auto req = parse_object(body);
  if (!req) return error_reply(400, "request body must be a JSON object");
  const auto text = req->value("text", json()).is_string() ? req->at("text").get<std::string>() : "";
  if (text.empty()) return error_reply(400, "text must be a non-empty string");

  LabeledDocument entry;
  try {
    entry.tactic_labels = label_list(*req, "tactics");
    entry.technique_labels = label_list(*req, "techniques");
  } catch (const ParseError& e) {
    return error_reply(400, e.what());
  }
  const auto snapshot = bundle();
  entry.document = {text_id(text), "feedback", clean_joined(text, snapshot->stopword_set)};
  entry.added_at = utc_timestamp_now();
  try {
    validate_labels(entry, snapshot->taxonomy);
    store_.append(entry, snapshot->taxonomy);  // fsynced before returning
  } catch (const ConflictError& e) {
    return error_reply(409, e.what());
  } catch (const ValidationError& e) {
    return error_reply(422, e.what());
  } catch (const Error& e) {
    return error_reply(500, e.what());
  }
  return ok(201, {{"doc_id", entry.document.doc_id}, {"stored", store_.size()}});
}

Service::Reply Service::retrain() {
  bool expected = false;
  if (!retraining_.compare_exchange_strong(expected, true)) {
    return error_reply(409, "a retrain is already running");
  }
  if (retrain_thread_.joinable()) retrain_thread_.join();

  retrain_thread_ = std::thread([this] {
    std::string error;
    try {
      const auto current = bundle();
      const auto docs = store_.snapshot();
      auto next = std::make_shared<ModelBundle>(
          options_.trainer(docs, current->taxonomy, current->stats, options_.config));
      if (!options_.save_path.empty()) next->save(options_.save_path);
      std::lock_guard lock(bundle_mutex_);
      bundle_ = std::move(next);
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(retrain_mutex_);
    last_retrain_error_ = error;
    last_retrain_finished_ = utc_timestamp_now();
    retraining_.store(false);
    retrain_done_.notify_all();
  });
  return ok(202, {{"status", "started"}, {"documents", store_.size()}});
}

Service::Reply Service::model() const {
  const auto snapshot = bundle();
  json retrain{{"running", retraining_.load()}};
  {
    std::lock_guard lock(retrain_mutex_);
    retrain["last_finished"] = last_retrain_finished_;
    retrain["last_error"] = last_retrain_error_;
  }
  return ok(200, {{"model_version", model_version(*snapshot)},
                  {"trained_at", snapshot->trained_at},
                  {"trained_on", snapshot->trained_on},
                  {"taxonomy_version", snapshot->taxonomy_version()},
                  {"cv_scores",
                   {{"tactics", snapshot->cv_tactics.to_json()},
                    {"techniques", snapshot->cv_techniques.to_json()}}},
                  {"postprocessing", snapshot->postprocess.to_json()},
                  {"warnings", snapshot->warnings},
                  {"store_size", store_.size()},
                  {"retrain", retrain}});
}

Service::Reply Service::taxonomy() const {
  const auto snapshot = bundle();
  const auto& tax = snapshot->taxonomy;
  auto tactics = json::array();
  for (const auto& t : tax.tactics()) tactics.push_back({{"label_id", t.id}, {"name", t.name}});
  auto techniques = json::array();
  for (const auto& t : tax.techniques()) {
    techniques.push_back({{"label_id", t.id}, {"name", t.name}, {"tactics", t.tactic_ids}});
  }
  return ok(200, {{"version", tax.version()}, {"tactics", tactics}, {"techniques", techniques}});
}

Service::Reply Service::export_stix(const std::string& doc_id) const {
  if (doc_id.empty()) return error_reply(400, "doc_id is required");
  const auto found = recall(doc_id);
  if (!found) return error_reply(404, "unknown doc_id " + doc_id);

  const auto snapshot = bundle();
  try {
    const auto pred = classify(*snapshot, found->doc);
    const auto title = found->title.empty() ? "Report " + doc_id : found->title;
    // Published is pinned to the training time so repeated exports match.
    const auto result = ttpmap::export_stix(pred, found->doc, snapshot->taxonomy, title, snapshot->trained_at);
    return {200, result.dump()};
  } catch (const Error& e) {
    return error_reply(422, e.what());
  }
}

void Service::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Post("/api/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, predict(req.body));
  });
  server.Post("/api/feedback", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, feedback(req.body));
  });
  server.Post("/api/retrain", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, retrain());
  });
  server.Get("/api/model", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, model());
  });
  server.Get("/api/taxonomy", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, taxonomy());
  });
  server.Get("/api/export", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, export_stix(req.get_param_value("doc_id")));
  });
}

}  // namespace ttpmap::app
