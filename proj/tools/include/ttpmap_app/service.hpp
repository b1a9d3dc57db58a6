#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ttpmap/bundle.hpp"
#include "ttpmap/ingest.hpp"

namespace httplib {
class Server;
}

namespace ttpmap::app {

/// PredictResponse body: doc_id, model_version and the tactic and technique
/// lists as {label_id, name, confidence, decided}.
nlohmann::json predict_response(const ModelBundle& bundle, const PredictionSet& pred);

/// Identifies a bundle in responses: its training timestamp.
std::string model_version(const ModelBundle& bundle);

using Trainer = std::function<ModelBundle(std::span<const LabeledDocument>, const Taxonomy&,
                                          const AssociationStats&, const TrainConfig&)>;

struct ServiceOptions {
  std::filesystem::path store_path;
  /// Where a retrained bundle is written. Empty keeps it in memory only.
  std::filesystem::path save_path;
  TrainConfig config;
  /// Defaults to train_bundle.
  Trainer trainer;
  /// Predicted documents remembered for /api/export.
  std::size_t export_cache = 256;
};

/// JSON API over a model bundle and a training store.
///
///   POST /api/predict    {text, title?}              -> 200 PredictResponse
///   POST /api/feedback   {text, tactics, techniques} -> 201
///   POST /api/retrain                                -> 202, 409 while one runs
///   GET  /api/model                                  -> bundle metadata
///   GET  /api/taxonomy                               -> label lists
///   GET  /api/export?doc_id=...                      -> STIX bundle
///
/// Requests are served concurrently. Every request works on one bundle snapshot;
/// a finished retrain swaps the snapshot in a single step.
class Service {
 public:
  Service(ModelBundle bundle, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void mount(httplib::Server& server);

  std::shared_ptr<const ModelBundle> bundle() const;
  TrainingStore& store() { return store_; }
  bool retrain_running() const { return retraining_.load(); }
  /// Blocks until no retrain is in flight.
  void wait_for_retrain();

  /// Handlers, exposed for direct use. Each returns (status, JSON body).
  struct Reply {
    int status;
    std::string body;
  };
  Reply predict(const std::string& body);
  Reply feedback(const std::string& body);
  Reply retrain();
  Reply model() const;
  Reply taxonomy() const;
  Reply export_stix(const std::string& doc_id) const;

 private:
  struct Remembered {
    Document doc;
    std::string title;
  };
  void remember(const Document& doc, const std::string& title);
  std::optional<Remembered> recall(const std::string& doc_id) const;

  ServiceOptions options_;
  TrainingStore store_;

  mutable std::mutex bundle_mutex_;
  std::shared_ptr<const ModelBundle> bundle_;

  std::atomic<bool> retraining_{false};
  mutable std::mutex retrain_mutex_;
  std::condition_variable retrain_done_;
  std::thread retrain_thread_;
  std::string last_retrain_error_;
  std::string last_retrain_finished_;

  mutable std::mutex cache_mutex_;
  std::list<std::string> cache_order_;
  std::unordered_map<std::string, Remembered> cache_;
};

}  // namespace ttpmap::app
