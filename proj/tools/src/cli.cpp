#include "ttpmap_app/cli.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include "ttpmap/bundle.hpp"
#include "ttpmap/error.hpp"
#include "ttpmap/evaluate.hpp"
#include "ttpmap/stix_export.hpp"
#include "ttpmap/training.hpp"
#include "ttpmap/util.hpp"
#include "ttpmap_app/service.hpp"

namespace ttpmap::app {

namespace {

struct KnowledgeBase {
  Taxonomy taxonomy;
  AssociationStats stats;
};

KnowledgeBase load_kb(const std::string& path, bool verbose, std::ostream& err) {
  const auto bundle = load_bundle_json(path);
  Diagnostics diag;
  KnowledgeBase kb;
  kb.taxonomy = parse_bundle(bundle, &diag);
  kb.stats = build_association_stats(bundle, kb.taxonomy, &diag);
  if (verbose) {
    diag.write(err);
  } else if (!diag.messages.empty()) {
    err << path << ": " << diag.messages.size() << " objects skipped (-v for details)\n";
  }
  return kb;
}

struct TrainFlags {
  std::string config;
  std::string postprocess;
  std::optional<std::size_t> folds;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON training configuration")->check(CLI::ExistingFile);
    cmd->add_option("--postprocess", postprocess, "Post-processing strategy (disables auto-selection)");
    cmd->add_option("--folds", folds, "Cross-validation folds")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Random seed");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config.empty()) cfg = TrainConfig::from_json(nlohmann::json::parse(read_file(config)));
    if (!postprocess.empty()) {
      cfg.postprocess.strategy = strategy_from_string(postprocess);
      cfg.auto_select = false;
    }
    if (folds) cfg.folds = *folds;
    if (seed) cfg.seed = *seed;
    return cfg;
  }
};

// A report from a file, or standard input for "-".
Document read_input(const std::string& path, std::istream& in) {
  if (path == "-") {
    Document doc;
    doc.source = "stdin";
    doc.text.assign(std::istreambuf_iterator<char>(in), {});
    if (doc.text.find("<p") != std::string::npos) doc.text = extract_html_text(doc.text);
    doc.doc_id = sha256_hex(doc.text).substr(0, 16);
    return doc;
  }
  if (!std::filesystem::exists(path)) throw ParseError(path + ": no such file");
  return load_document(path);
}

void write_output(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    write_file_atomic(path, content);
  }
}

LabelSet split_labels(const std::vector<std::string>& items) {
  LabelSet out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string id;
    while (std::getline(ss, id, ',')) {
      if (!id.empty()) out.insert(id);
    }
  }
  return out;
}

std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void stop_server(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Label threat reports with ATT&CK tactics and techniques", "ttpmap"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Print every diagnostic");

  std::string taxonomy_path, store_path, model_path = "model.bundle.json", out_path;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Add labelled reports to a training store");
  std::string corpus_dir;
  std::vector<std::string> ingest_files, ingest_tactics, ingest_techniques;
  ingest->add_option("--taxonomy", taxonomy_path, "ATT&CK STIX bundle")->required()->check(CLI::ExistingFile);
  ingest->add_option("--store", store_path, "Training store (JSON lines)")->required();
  ingest->add_option("--corpus", corpus_dir, "Directory of reports named by sha256(url)")
      ->check(CLI::ExistingDirectory);
  ingest->add_option("--tactics", ingest_tactics, "Tactic ids for the given files (comma separated)")
      ->delimiter(',')
      ->allow_extra_args(false);
  ingest->add_option("--techniques", ingest_techniques, "Technique ids for the given files")
      ->delimiter(',')
      ->allow_extra_args(false);
  ingest->add_option("files", ingest_files, "Report files (.txt/.html)")->check(CLI::ExistingFile);

  // train
  auto* train = app.add_subcommand("train", "Train a model bundle from a store");
  TrainFlags train_flags;
  train->add_option("--taxonomy", taxonomy_path, "ATT&CK STIX bundle")->required()->check(CLI::ExistingFile);
  train->add_option("--store", store_path, "Training store")->required()->check(CLI::ExistingFile);
  train->add_option("--out,--model", out_path, "Bundle to write")->required();
  train_flags.add_to(train);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Classify one report");
  std::string input = "-", override_pp;
  predict_cmd->add_option("--model", model_path, "Model bundle")->capture_default_str();
  predict_cmd->add_option("--postprocess", override_pp, "Override the bundle's post-processing");
  predict_cmd->add_option("input", input, "Report file, or - for standard input");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validate one strategy");
  TrainFlags eval_flags;
  bool with_baseline = false;
  std::string format = "csv";
  evaluate->add_option("--taxonomy", taxonomy_path, "ATT&CK STIX bundle")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--store", store_path, "Training store")->required()->check(CLI::ExistingFile);
  evaluate->add_flag("--baseline", with_baseline, "Add the majority-label baseline row");
  evaluate->add_option("--format", format, "csv or table")->check(CLI::IsMember({"csv", "table"}));
  eval_flags.add_to(evaluate);

  // compare
  auto* compare = app.add_subcommand("compare", "Cross-validate every post-processing strategy");
  TrainFlags compare_flags;
  std::vector<std::string> strategy_names;
  std::string csv_path;
  compare->add_option("--taxonomy", taxonomy_path, "ATT&CK STIX bundle")->required()->check(CLI::ExistingFile);
  compare->add_option("--store", store_path, "Training store")->required()->check(CLI::ExistingFile);
  compare->add_option("--strategies", strategy_names, "Strategies to compare (default: all)")
      ->delimiter(',')
      ->allow_extra_args(false);
  compare->add_option("--csv", csv_path, "Also write the CSV table here");
  compare_flags.add_to(compare);

  // export-stix
  auto* export_cmd = app.add_subcommand("export-stix", "Classify a report and write a STIX 2.0 bundle");
  std::string title, published, export_input = "-";
  export_cmd->add_option("--model", model_path, "Model bundle")->capture_default_str();
  export_cmd->add_option("--title", title, "Report name")->required();
  export_cmd->add_option("--published", published, "Publication timestamp (default: now)");
  export_cmd->add_option("--out", out_path, "Output file (default: standard output)");
  export_cmd->add_option("--postprocess", override_pp, "Override the bundle's post-processing");
  export_cmd->add_option("input", export_input, "Report file, or - for standard input");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the JSON API");
  std::string bind = "127.0.0.1:8080", save_to, serve_config;
  serve->add_option("--model", model_path, "Model bundle")->capture_default_str();
  serve->add_option("--store", store_path, "Training store receiving feedback")->required();
  serve->add_option("--bind", bind, "host:port");
  serve->add_option("--save-to", save_to, "Write retrained bundles here");
  serve->add_option("--config", serve_config, "Training configuration for retrains")->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) {
      const auto kb = load_kb(taxonomy_path, verbose, err);
      TrainingStore store(store_path);
      std::vector<LabeledDocument> entries;
      if (!corpus_dir.empty()) {
        Diagnostics diag;
        const auto bundle = load_bundle_json(taxonomy_path);
        entries = bootstrap_corpus(bundle, kb.taxonomy, corpus_dir, StopwordSet::english(), &diag);
        if (verbose) diag.write(err);
      }
      if (!ingest_files.empty()) {
        const auto techniques = split_labels(ingest_techniques);
        auto tactics = split_labels(ingest_tactics);
        if (tactics.empty()) tactics = kb.taxonomy.implied_tactics(techniques);
        for (const auto& f : ingest_files) {
          auto doc = load_document(f);
          doc.text = clean_joined(doc.text, StopwordSet::english());
          entries.push_back({doc, tactics, techniques, utc_timestamp_now()});
        }
      }
      if (entries.empty()) {
        err << "error: nothing to ingest (give --corpus or report files)\n";
        return kExitUsage;
      }
      std::size_t added = 0, duplicates = 0;
      for (auto& e : entries) {
        if (store.contains(e.document.doc_id)) {
          ++duplicates;
          continue;
        }
        if (e.added_at.empty()) e.added_at = utc_timestamp_now();
        store.append(std::move(e), kb.taxonomy);
        ++added;
      }
      out << nlohmann::json{{"added", added}, {"duplicates", duplicates}, {"store_size", store.size()}}.dump()
          << "\n";
      return kExitOk;
    }

    if (train->parsed()) {
      const auto kb = load_kb(taxonomy_path, verbose, err);
      const auto docs = TrainingStore::read(store_path);
      const auto bundle = train_bundle(docs, kb.taxonomy, kb.stats, train_flags.resolve());
      bundle.save(out_path);
      for (const auto& w : bundle.warnings) err << "warning: " << w << "\n";
      out << nlohmann::json{{"model", out_path},
                            {"trained_on", bundle.trained_on},
                            {"postprocessing", to_string(bundle.postprocess.strategy)},
                            {"cv_scores",
                             {{"tactics", bundle.cv_tactics.to_json()},
                              {"techniques", bundle.cv_techniques.to_json()}}}}
                 .dump(2)
          << "\n";
      return kExitOk;
    }

    if (predict_cmd->parsed() || export_cmd->parsed()) {
      const auto doc = read_input(predict_cmd->parsed() ? input : export_input, in);
      const auto bundle = ModelBundle::load(model_path);
      std::optional<Strategy> strategy;
      if (!override_pp.empty()) strategy = strategy_from_string(override_pp);
      const auto pred = classify(bundle, doc, strategy);
      if (predict_cmd->parsed()) {
        out << predict_response(bundle, pred).dump(2) << "\n";
      } else {
        const auto result = export_stix(pred, doc, bundle.taxonomy, title, published);
        for (const auto& w : result.warnings) err << "warning: " << w << "\n";
        write_output(out_path, result.dump(), out);
      }
      return kExitOk;
    }

    if (evaluate->parsed()) {
      const auto kb = load_kb(taxonomy_path, verbose, err);
      const auto docs = TrainingStore::read(store_path);
      const auto cfg = eval_flags.resolve();
      std::vector<ComparisonRow> rows;
      if (with_baseline) rows.push_back(cross_validate_baseline(docs, kb.taxonomy, cfg).to_row("majority"));
      const auto strategy = cfg.postprocess.strategy;
      rows.push_back(cross_validate(docs, kb.taxonomy, kb.stats, cfg, strategy).to_row(to_string(strategy)));
      if (format == "csv") {
        write_csv(out, rows);
      } else {
        write_table(out, rows);
      }
      return kExitOk;
    }

    if (compare->parsed()) {
      const auto kb = load_kb(taxonomy_path, verbose, err);
      const auto docs = TrainingStore::read(store_path);
      const auto cfg = compare_flags.resolve();
      std::vector<Strategy> strategies;
      for (const auto& n : strategy_names) strategies.push_back(strategy_from_string(n));
      if (strategies.empty()) strategies = all_strategies();
      std::vector<ComparisonRow> rows;
      rows.push_back(cross_validate_baseline(docs, kb.taxonomy, cfg).to_row("majority"));
      for (auto& r : compare_strategies(docs, kb.taxonomy, kb.stats, cfg, strategies)) rows.push_back(std::move(r));
      write_table(out, rows);
      if (!csv_path.empty()) {
        std::ostringstream csv;
        write_csv(csv, rows);
        write_file_atomic(csv_path, csv.str());
      }
      return kExitOk;
    }

    if (serve->parsed()) {
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) {
        err << "error: --bind expects host:port\n";
        return kExitUsage;
      }
      const auto host = bind.substr(0, colon);
      int port = 0;
      try {
        port = std::stoi(bind.substr(colon + 1));
      } catch (const std::exception&) {
        err << "error: bad port in --bind " << bind << "\n";
        return kExitUsage;
      }
      ServiceOptions opts;
      opts.store_path = store_path;
      opts.save_path = save_to;
      if (!serve_config.empty()) {
        opts.config = TrainConfig::from_json(nlohmann::json::parse(read_file(serve_config)));
      }
      Service service(ModelBundle::load(model_path), std::move(opts));
      httplib::Server server;
      service.mount(server);
      if (!server.bind_to_port(host, port)) {
        err << "error: cannot bind " << bind << "\n";
        return kExitRuntime;
      }
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      err << "listening on " << bind << "\n";
      server.listen_after_bind();
      g_server = nullptr;
      service.wait_for_retrain();
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ttpmap::app
