#include <gtest/gtest.h>
#include <httplib.h>

#include <future>
#include <thread>

#include "test_support.hpp"
#include "ttpmap/error.hpp"
#include "ttpmap/stix_export.hpp"
#include "ttpmap/training.hpp"
#include "ttpmap/util.hpp"
#include "ttpmap_app/service.hpp"

namespace ttpmap {
namespace {

using app::Service;
using app::ServiceOptions;
using nlohmann::json;

// Service mounted on an ephemeral loopback port.
class LiveServer {
 public:
  explicit LiveServer(Service& service) {
    service.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fx::SyntheticOptions o;
    o.docs = 100;
    corpus_ = new fx::SyntheticCorpus(
        fx::make_corpus_over(load_taxonomy((fx::data_dir() / "attack_fixture.json").string()), o));
    TrainConfig cfg;
    cfg.auto_select = false;
    cfg.folds = 3;
    base_ = new ModelBundle(train_bundle(corpus_->docs, corpus_->taxonomy, fx::stats_from_docs(corpus_->docs, corpus_->taxonomy), cfg));
  }
  static void TearDownTestSuite() {
    delete base_;
    delete corpus_;
  }

  ServiceOptions options(app::Trainer trainer = {}) const {
    ServiceOptions o;
    o.store_path = dir_ / "store.jsonl";
    o.trainer = std::move(trainer);
    return o;
  }
  static std::string text() { return corpus_->docs.front().document.text; }

  static ModelBundle* base_;
  static fx::SyntheticCorpus* corpus_;
  fx::TempDir dir_;
};

ModelBundle* ServiceTest::base_ = nullptr;
fx::SyntheticCorpus* ServiceTest::corpus_ = nullptr;

// Trainer that blocks until released and then returns a relabelled copy of `base`.
struct GatedTrainer {
  std::shared_ptr<std::promise<void>> gate = std::make_shared<std::promise<void>>();
  std::shared_future<void> opened = gate->get_future().share();
  std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);

  app::Trainer make(const ModelBundle& base, std::string version) const {
    return [=, opened = opened, calls = calls](auto, auto&, auto&, auto&) {
      ++*calls;
      opened.wait();
      ModelBundle next = base;
      next.trained_at = version;
      return next;
    };
  }
  void release() const { gate->set_value(); }
};

TEST_F(ServiceTest, PredictReturnsSchemaValidBody) {
  Service service(*base_, options());
  LiveServer live(service);
  auto res = live.client().Post("/api/predict", json{{"text", text()}}.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j["model_version"], base_->trained_at);
  EXPECT_EQ(j["doc_id"], sha256_hex(text()).substr(0, 16));
  EXPECT_EQ(j["tactics"].size(), base_->models.tactic_models.size());
  EXPECT_EQ(j["techniques"].size(), base_->models.technique_models.size());
  for (const auto* scope : {"tactics", "techniques"}) {
    for (const auto& p : j[scope]) {
      ASSERT_TRUE(p["label_id"].is_string());
      ASSERT_TRUE(p["name"].is_string());
      ASSERT_TRUE(p["decided"].is_boolean());
      EXPECT_GE(p["confidence"].get<double>(), 0.0);
      EXPECT_LE(p["confidence"].get<double>(), 1.0);
    }
  }
}

TEST_F(ServiceTest, PredictRejectsBadBodies) {
  Service service(*base_, options());
  LiveServer live(service);
  auto c = live.client();
  EXPECT_EQ(c.Post("/api/predict", "{not json", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/api/predict", "[1,2]", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/api/predict", R"({"text": ""})", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/api/predict", R"({"text": 5})", "application/json")->status, 400);
}

TEST_F(ServiceTest, FeedbackIsDurableBefore201) {
  Service service(*base_, options());
  LiveServer live(service);
  const json body{{"text", "Phishing emails carried a malicious attachment."},
                  {"tactics", {"TA0001"}},
                  {"techniques", {"T1566"}}};
  auto res = live.client().Post("/api/feedback", body.dump(), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 201);
  const auto id = json::parse(res->body)["doc_id"].get<std::string>();

  // Read straight from disk, independent of the service's in-memory copy.
  const auto on_disk = TrainingStore::read(dir_ / "store.jsonl");
  ASSERT_EQ(on_disk.size(), 1u);
  EXPECT_EQ(on_disk[0].document.doc_id, id);
  EXPECT_EQ(on_disk[0].technique_labels, LabelSet{"T1566"});
  EXPECT_EQ(on_disk[0].document.text, "phishing emails carried malicious attachment");
}

TEST_F(ServiceTest, FeedbackErrors) {
  Service service(*base_, options());
  LiveServer live(service);
  auto c = live.client();
  auto post = [&](const std::string& body) { return c.Post("/api/feedback", body, "application/json")->status; };

  EXPECT_EQ(post(R"({"text": "report", "techniques": ["T9999"]})"), 422);
  EXPECT_EQ(post(R"({"text": "report", "tactics": ["TA9999"]})"), 422);
  EXPECT_EQ(post(R"({"text": "report", "techniques": "T1566"})"), 400);
  EXPECT_EQ(post(R"({"techniques": ["T1566"]})"), 400);
  EXPECT_EQ(post("nope"), 400);
  EXPECT_EQ(post(R"({"text": "report text", "techniques": ["T1566"]})"), 201);
  EXPECT_EQ(post(R"({"text": "report text", "techniques": ["T1003"]})"), 409);
  EXPECT_EQ(TrainingStore::read(dir_ / "store.jsonl").size(), 1u);
}

TEST_F(ServiceTest, ConcurrentRetrainIsSingleFlight) {
  GatedTrainer gated;
  Service service(*base_, options(gated.make(*base_, "retrained")));
  LiveServer live(service);

  std::vector<std::future<int>> posts;
  for (int i = 0; i < 2; ++i) {
    posts.push_back(std::async(std::launch::async, [&] { return live.client().Post("/api/retrain")->status; }));
  }
  std::vector<int> statuses{posts[0].get(), posts[1].get()};
  std::sort(statuses.begin(), statuses.end());
  EXPECT_EQ(statuses, (std::vector<int>{202, 409}));

  // Still running: a third request is refused too, and the old bundle serves.
  EXPECT_EQ(live.client().Post("/api/retrain")->status, 409);
  auto model = json::parse(live.client().Get("/api/model")->body);
  EXPECT_TRUE(model["retrain"]["running"].get<bool>());
  EXPECT_EQ(model["trained_at"], base_->trained_at);

  gated.release();
  service.wait_for_retrain();
  EXPECT_EQ(*gated.calls, 1);
  model = json::parse(live.client().Get("/api/model")->body);
  EXPECT_FALSE(model["retrain"]["running"].get<bool>());
  EXPECT_EQ(model["trained_at"], "retrained");
  EXPECT_EQ(model["retrain"]["last_error"], "");

  EXPECT_EQ(live.client().Post("/api/retrain")->status, 202);
  service.wait_for_retrain();
  EXPECT_EQ(*gated.calls, 2);
}

TEST_F(ServiceTest, PredictionsComeFromOneBundleAcrossSwap) {
  GatedTrainer gated;
  Service service(*base_, options(gated.make(*base_, "second")));
  LiveServer live(service);
  ASSERT_EQ(live.client().Post("/api/retrain")->status, 202);

  std::atomic<bool> stop{false};
  std::vector<std::string> seen;
  std::mutex seen_mutex;
  std::vector<std::thread> readers;
  for (int t = 0; t < 4; ++t) {
    readers.emplace_back([&] {
      auto c = live.client();
      while (!stop) {
        auto res = c.Post("/api/predict", json{{"text", text()}}.dump(), "application/json");
        ASSERT_TRUE(res);
        ASSERT_EQ(res->status, 200);
        std::lock_guard lock(seen_mutex);
        seen.push_back(json::parse(res->body)["model_version"]);
      }
    });
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  gated.release();
  service.wait_for_retrain();
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  stop = true;
  for (auto& r : readers) r.join();

  ASSERT_FALSE(seen.empty());
  for (const auto& v : seen) EXPECT_TRUE(v == base_->trained_at || v == "second") << v;
  EXPECT_EQ(seen.back(), "second");
}

TEST_F(ServiceTest, FailedRetrainKeepsBundleAndReportsError) {
  auto trainer = [](auto, auto&, auto&, auto&) -> ModelBundle { throw Error("store has no usable labels"); };
  Service service(*base_, options(trainer));
  LiveServer live(service);
  ASSERT_EQ(live.client().Post("/api/retrain")->status, 202);
  service.wait_for_retrain();
  const auto model = json::parse(live.client().Get("/api/model")->body);
  EXPECT_EQ(model["trained_at"], base_->trained_at);
  EXPECT_EQ(model["retrain"]["last_error"], "store has no usable labels");
}

TEST_F(ServiceTest, RetrainTrainsOnFeedbackAndSavesWhenAsked) {
  auto opts = options();
  opts.save_path = dir_ / "saved.bundle.json";
  opts.config.auto_select = false;
  opts.config.folds = 3;
  fx::write_store(opts.store_path, corpus_->docs);
  Service service(*base_, std::move(opts));
  LiveServer live(service);

  ASSERT_EQ(live.client().Post("/api/retrain")->status, 202);
  service.wait_for_retrain();
  const auto model = json::parse(live.client().Get("/api/model")->body);
  EXPECT_EQ(model["retrain"]["last_error"], "");
  EXPECT_EQ(model["trained_on"], corpus_->docs.size());
  const auto saved = ModelBundle::load(dir_ / "saved.bundle.json");
  EXPECT_EQ(saved.trained_at, model["trained_at"]);
}

TEST_F(ServiceTest, RetrainWithoutSavePathWritesNothing) {
  GatedTrainer gated;
  gated.release();
  Service service(*base_, options(gated.make(*base_, "mem")));
  ASSERT_EQ(service.retrain().status, 202);
  service.wait_for_retrain();
  EXPECT_EQ(service.bundle()->trained_at, "mem");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir_.path())) ++files;
  EXPECT_EQ(files, 0u);
}

TEST_F(ServiceTest, ModelAndTaxonomyMetadata) {
  Service service(*base_, options());
  LiveServer live(service);
  const auto model = json::parse(live.client().Get("/api/model")->body);
  EXPECT_EQ(model["trained_at"], base_->trained_at);
  EXPECT_EQ(model["postprocessing"]["strategy"], "hanging-node");
  EXPECT_TRUE(model["cv_scores"]["tactics"].contains("macro_f05"));

  auto res = live.client().Get("/api/taxonomy");
  ASSERT_EQ(res->status, 200);
  const auto tax = json::parse(res->body);
  EXPECT_EQ(tax["tactics"].size(), base_->taxonomy.tactics().size());
  EXPECT_EQ(tax["techniques"].size(), base_->taxonomy.techniques().size());
  EXPECT_EQ(tax["tactics"][0]["label_id"], "TA0001");
}

TEST_F(ServiceTest, ExportFollowsPredictAndStore) {
  Service service(*base_, options());
  LiveServer live(service);
  auto c = live.client();
  EXPECT_EQ(c.Get("/api/export?doc_id=0123456789abcdef")->status, 404);
  EXPECT_EQ(c.Get("/api/export")->status, 400);

  auto pred = json::parse(c.Post("/api/predict", json{{"text", text()}, {"title", "Sample"}}.dump(), "application/json")->body);
  const auto id = pred["doc_id"].get<std::string>();
  auto first = c.Get("/api/export?doc_id=" + id);
  ASSERT_EQ(first->status, 200);
  EXPECT_EQ(c.Get("/api/export?doc_id=" + id)->body, first->body);

  const auto bundle = json::parse(first->body);
  LabelSet decided;
  for (const auto* scope : {"tactics", "techniques"}) {
    for (const auto& p : pred[scope]) {
      if (p["decided"].get<bool>()) decided.insert(base_->taxonomy.stix_id_of(p["label_id"]));
    }
  }
  const auto refs = parse_object_refs(bundle);
  EXPECT_EQ(LabelSet(refs.begin(), refs.end()), decided);
  for (const auto& o : bundle["objects"]) {
    if (o["type"] == "report") EXPECT_EQ(o["name"], "Sample");
  }

  auto fb = c.Post("/api/feedback", json{{"text", "lateral movement over smb shares"}, {"techniques", {"T1021"}}}.dump(),
                   "application/json");
  ASSERT_EQ(fb->status, 201);
  EXPECT_EQ(c.Get("/api/export?doc_id=" + json::parse(fb->body)["doc_id"].get<std::string>())->status, 200);
}

}  // namespace
}  // namespace ttpmap
