#include "oodbench/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "oodbench/bytes.hpp"
#include "oodbench/checkpoint.hpp"
#include "oodbench/datasets.hpp"
#include "oodbench/errors.hpp"
#include "oodbench/evaluation.hpp"
#include "oodbench/harness.hpp"
#include "oodbench/log.hpp"
#include "oodbench/rng.hpp"

namespace fs = std::filesystem;

namespace oodbench {

namespace {

std::string join(const std::string& a, const std::string& b) {
  return (fs::path(a) / b).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DataError("failed writing " + path);
}

std::string read_text(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

std::string fmtd(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::string Paths::benchmark(const std::string& name) const {
  return join(benchmarks_dir, name + ".oods");
}
std::string Paths::manifest(const std::string& name) const {
  return join(benchmarks_dir, name + ".manifest.json");
}
std::string Paths::monitor(const std::string& kind) const {
  return join(monitors_dir, kind + ".oodm");
}
std::string Paths::readout(const std::string& bench, const std::string& kind) const {
  return join(readouts_dir, bench + "__" + kind + ".csv");
}
std::string Paths::resources(const std::string& bench, const std::string& kind) const {
  return join(readouts_dir, bench + "__" + kind + ".resources.json");
}

Paths make_paths(const std::string& out_dir) {
  Paths p;
  p.out_dir = out_dir;
  p.data_dir = join(out_dir, "data");
  p.benchmarks_dir = join(out_dir, "benchmarks");
  p.monitors_dir = join(out_dir, "monitors");
  p.readouts_dir = join(out_dir, "readouts");
  p.report_dir = join(out_dir, "report");
  p.train_set = join(p.data_dir, "train.oods");
  p.holdout_set = join(p.data_dir, "holdout.oods");
  p.model = join(out_dir, "model.oodb");
  p.report_json = join(p.report_dir, "report.json");
  p.report_txt = join(p.report_dir, "report.txt");
  p.cd_svg = join(p.report_dir, "cd.svg");
  p.cd_txt = join(p.report_dir, "cd.txt");
  return p;
}

std::vector<std::size_t> dataset_input_shape(const DatasetConfig& dc) {
  if (dc.kind == "synthetic_shapes") return {1, dc.image_size, dc.image_size};
  if (dc.kind == "cifar10") return {3, 32, 32};
  if (dc.kind == "idx") {
    const IdxData d = read_idx(dc.images_path);
    if (!d.has_images || d.images.empty())
      throw DataError("idx image file holds no images: " + dc.images_path);
    return d.images.front().shape;
  }
  throw ConfigError("unknown dataset kind '" + dc.kind + "'");
}

namespace {

std::vector<LabeledInstance> load_source(const DatasetConfig& dc) {
  if (dc.kind == "synthetic_shapes")
    return synthetic_shapes(dc.num_classes, dc.per_class, dc.image_size, dc.seed);
  if (dc.kind == "idx") {
    const IdxData images = read_idx(dc.images_path);
    const IdxData labels = read_idx(dc.labels_path);
    if (!images.has_images) throw DataError(dc.images_path + " is not an idx image file");
    if (!labels.has_labels) throw DataError(dc.labels_path + " is not an idx label file");
    if (images.images.size() != labels.labels.size())
      throw DataError("idx image and label counts differ");
    std::vector<LabeledInstance> out(images.images.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "idx-%06zu", i);
      out[i].id = buf;
      out[i].image = images.images[i];
      out[i].label = labels.labels[i];
    }
    return out;
  }
  if (dc.kind == "cifar10") {
    std::vector<LabeledInstance> out;
    for (std::size_t b = 0; b < dc.batches.size(); ++b) {
      auto [images, labels] = read_cifar10_binary(dc.batches[b]);
      for (std::size_t i = 0; i < images.size(); ++i) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "cifar%zu-%05zu", b, i);
        LabeledInstance inst;
        inst.id = buf;
        inst.image = std::move(images[i]);
        inst.label = labels[i];
        out.push_back(std::move(inst));
      }
    }
    if (out.empty()) throw DataError("cifar batches hold no records");
    return out;
  }
  throw ConfigError("unknown dataset kind '" + dc.kind + "'");
}

std::vector<std::string> source_names(const DatasetConfig& dc) {
  if (dc.kind == "synthetic_shapes") {
    std::ostringstream os;
    os << "synthetic_shapes(classes=" << dc.num_classes << ",per_class=" << dc.per_class
       << ",size=" << dc.image_size << ",seed=" << dc.seed << ")";
    return {os.str()};
  }
  if (dc.kind == "idx") return {dc.images_path, dc.labels_path};
  return dc.batches;
}

nlohmann::json fault_json(const FaultTemplate& t) {
  nlohmann::json j;
  j["name"] = t.name;
  if (t.severity > 0) j["severity"] = t.severity;
  j["seed"] = t.seed;
  for (const auto& [k, v] : t.params) j[k] = v;
  return j;
}

double param_or(const FaultTemplate& t, const std::string& key, double fallback) {
  const auto it = t.params.find(key);
  return it == t.params.end() ? fallback : it->second;
}

// Foreign-glyph corpus shaped like the holdout images.
std::vector<LabeledInstance> build_novelty(const FaultTemplate& t,
                                           const std::vector<LabeledInstance>& holdout,
                                           const ExperimentConfig& cfg) {
  const std::vector<std::size_t>& shape = holdout.front().image.shape;
  if (shape.size() != 3 || shape[1] != shape[2] || shape[1] < 12)
    throw ConfigError("novelty glyphs need square images with side >= 12");
  const std::size_t classes = static_cast<std::size_t>(param_or(t, "classes", 3.0));
  const int default_offset = cfg.dataset.kind == "synthetic_shapes"
                                 ? static_cast<int>(cfg.dataset.num_classes)
                                 : 10;
  const int label_offset =
      static_cast<int>(param_or(t, "label_offset", static_cast<double>(default_offset)));
  const std::size_t per_class = static_cast<std::size_t>(param_or(
      t, "per_class",
      static_cast<double>(std::max<std::size_t>(1, holdout.size() / std::max<std::size_t>(
                                                        1, classes)))));
  std::vector<LabeledInstance> foreign;
  try {
    foreign = synthetic_shapes(classes, per_class, shape[1], t.seed, label_offset, "nov");
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("novelty template: ") + e.what());
  }
  if (shape[0] == 3)
    for (LabeledInstance& inst : foreign) inst.image = gray_to_rgb(inst.image);
  else if (shape[0] != 1)
    throw ConfigError("novelty glyphs support 1- or 3-channel images");
  mark_novelty(foreign, fault_tag(t));
  return foreign;
}

BenchmarkDataset load_benchmark_checked(const std::string& path,
                                        const ExperimentConfig& cfg) {
  if (!fs::exists(path))
    throw DataError(path + " is missing; run the earlier stages first");
  std::uint64_t hash = 0;
  BenchmarkDataset ds = load_benchmark(path, &hash);
  if (hash != cfg.config_hash)
    throw DataError(path + " was produced by a different config");
  return ds;
}

}  // namespace

Network ensure_model(const ExperimentConfig& cfg) {
  const Paths p = make_paths(cfg.out_dir);
  if (fs::exists(p.model)) {
    std::uint64_t hash = 0;
    Network net = load_network(p.model, &hash);
    if (hash != cfg.config_hash)
      throw DataError(p.model + " was produced by a different config");
    return net;
  }
  const BenchmarkDataset train = load_benchmark_checked(p.train_set, cfg);
  if (train.instances.empty()) throw DataError("training split is empty");
  std::vector<LayerSpec> specs =
      resolve_layers(cfg.classifier.layers, train.instances.front().image.shape);
  Network net0 = init_network(train.instances.front().image.shape, std::move(specs),
                              cfg.classifier.capture, cfg.classifier.train.seed);
  log::info("training classifier (" + std::to_string(net0.param_count()) + " parameters)");
  TrainResult result =
      train_classifier(std::move(net0), to_examples(train.instances), cfg.classifier.train);
  log::info("classifier train accuracy " + fmtd("%.4f", result.train_accuracy));
  save_network(result.net, p.model, cfg.config_hash);
  return result.net;
}

void cmd_generate(const ExperimentConfig& cfg) {
  const Paths p = make_paths(cfg.out_dir);
  fs::create_directories(p.data_dir);
  fs::create_directories(p.benchmarks_dir);

  const std::vector<LabeledInstance> source = load_source(cfg.dataset);
  const Split sp = split_id(source, cfg.dataset.train_fraction, cfg.dataset.split_seed);
  log::info("split: " + std::to_string(sp.train.size()) + " train, " +
            std::to_string(sp.holdout.size()) + " holdout");
  if (sp.holdout.empty()) throw DataError("holdout split is empty");

  BenchmarkDataset train_ds;
  train_ds.name = "train";
  train_ds.instances = sp.train;
  save_benchmark(train_ds, p.train_set, cfg.config_hash);
  BenchmarkDataset holdout_ds;
  holdout_ds.name = "holdout";
  holdout_ds.instances = sp.holdout;
  save_benchmark(holdout_ds, p.holdout_set, cfg.config_hash);

  // Adversarial templates need the trained classifier; train it now so the
  // later train stage reuses the identical checkpoint.
  Network net;
  const Network* netp = nullptr;
  for (const FaultTemplate& t : cfg.faults) {
    if (t.name == "fgsm") {
      net = ensure_model(cfg);
      netp = &net;
      break;
    }
  }

  const std::vector<std::string> sources = source_names(cfg.dataset);
  for (std::size_t i = 0; i < cfg.faults.size(); ++i) {
    const FaultTemplate& t = cfg.faults[i];
    const std::string tag = fault_tag(t);
    std::vector<LabeledInstance> ood;
    if (fault_category(t.name) == FaultCategory::Novelty)
      ood = build_novelty(t, sp.holdout, cfg);
    else
      ood = apply_template(sp.holdout, t, netp);
    const BenchmarkDataset bench =
        assemble_benchmark(tag, sp.holdout, ood, mix_seed(cfg.stream_seed, i + 1));
    save_benchmark(bench, p.benchmark(tag), cfg.config_hash);
    write_text(p.manifest(tag),
               make_manifest(bench, sources, fault_json(t), cfg.config_hash).dump(2) + "\n");
    log::info("benchmark " + tag + ": " + std::to_string(bench.instances.size()) +
              " instances");
  }

  if (cfg.control) {
    const BenchmarkDataset bench =
        assemble_benchmark("control", sp.holdout, {}, mix_seed(cfg.stream_seed, 0), true);
    save_benchmark(bench, p.benchmark("control"), cfg.config_hash);
    write_text(p.manifest("control"),
               make_manifest(bench, sources, nlohmann::json(), cfg.config_hash).dump(2) +
                   "\n");
    log::info("benchmark control: " + std::to_string(bench.instances.size()) + " instances");
  }
}

void cmd_train(const ExperimentConfig& cfg) {
  const std::vector<std::string> kinds = cfg.monitors.enabled();
  if (kinds.empty()) throw ConfigError("no monitors configured");
  const Paths p = make_paths(cfg.out_dir);
  fs::create_directories(p.monitors_dir);

  const Network net = ensure_model(cfg);
  const BenchmarkDataset train = load_benchmark_checked(p.train_set, cfg);
  const std::vector<Example> examples = to_examples(train.instances);
  std::printf("train accuracy %.4f over %zu instances\n", accuracy(net, examples),
              examples.size());

  for (const std::string& kind : kinds) {
    if (kind == "oob") {
      const OobMonitor m = fit_oob(net, examples, cfg.monitors.oob);
      save_monitor(m, p.monitor(kind), cfg.config_hash);
    } else if (kind == "odin") {
      const OdinMonitor m = fit_odin(net, examples, cfg.monitors.odin.temperature,
                                     cfg.monitors.odin.epsilon);
      save_monitor(m, p.monitor(kind), cfg.config_hash);
    } else if (kind == "recon") {
      const ReconMonitor m = fit_recon(examples, cfg.monitors.recon);
      save_monitor(m, p.monitor(kind), cfg.config_hash);
    }
    log::info("fitted monitor " + kind);
  }
}

void cmd_run(const ExperimentConfig& cfg, std::size_t workers,
             std::vector<std::string> only_monitors) {
  const Paths p = make_paths(cfg.out_dir);
  std::vector<std::string> kinds = cfg.monitors.enabled();
  if (!only_monitors.empty()) {
    for (const std::string& m : only_monitors)
      if (std::find(kinds.begin(), kinds.end(), m) == kinds.end())
        throw ConfigError("monitor '" + m + "' is not configured");
    kinds = only_monitors;
  }
  if (kinds.empty()) throw ConfigError("no monitors selected");
  if (workers == 0) workers = 1;

  std::uint64_t hash = 0;
  if (!fs::exists(p.model)) throw DataError(p.model + " is missing; run the train stage first");
  const Network net = load_network(p.model, &hash);
  if (hash != cfg.config_hash) throw DataError(p.model + " was produced by a different config");

  std::vector<std::unique_ptr<Monitor>> monitors;
  for (const std::string& kind : kinds) {
    const std::string path = p.monitor(kind);
    if (!fs::exists(path)) throw DataError(path + " is missing; run the train stage first");
    std::uint64_t mh = 0;
    monitors.push_back(load_monitor(path, &mh));
    if (mh != cfg.config_hash) throw DataError(path + " was produced by a different config");
  }

  std::vector<std::string> bench_paths;
  if (!fs::exists(p.benchmarks_dir))
    throw DataError(p.benchmarks_dir + " is missing; run the generate stage first");
  for (const auto& e : fs::directory_iterator(p.benchmarks_dir))
    if (e.path().extension() == ".oods") bench_paths.push_back(e.path().string());
  std::sort(bench_paths.begin(), bench_paths.end());
  if (bench_paths.empty()) throw DataError("no benchmark containers in " + p.benchmarks_dir);

  std::vector<BenchmarkDataset> benches;
  benches.reserve(bench_paths.size());
  for (const std::string& path : bench_paths)
    benches.push_back(load_benchmark_checked(path, cfg));

  fs::create_directories(p.readouts_dir);
  struct Task {
    const BenchmarkDataset* bench;
    const Monitor* monitor;
    std::string kind;
  };
  std::vector<Task> tasks;
  for (const BenchmarkDataset& b : benches)
    for (std::size_t m = 0; m < monitors.size(); ++m)
      tasks.push_back({&b, monitors[m].get(), kinds[m]});

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (first_error) return;
      }
      try {
        const Task& t = tasks[i];
        const std::vector<Readout> rows = run_stream(net, *t.monitor, *t.bench);
        write_readout_csv(p.readout(t.bench->name, t.kind), rows, cfg.config_hash);
        const ResourceReport rep = measure_resources(net, *t.monitor, rows);
        write_text(p.resources(t.bench->name, t.kind), resource_report_json(rep));
        log::info("ran " + t.bench->name + " with " + t.kind + " (" +
                  std::to_string(rows.size()) + " instances)");
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  if (workers == 1 || tasks.size() == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const std::size_t n = std::min(workers, tasks.size());
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

void cmd_eval(const ExperimentConfig& cfg) {
  const Paths p = make_paths(cfg.out_dir);
  if (!fs::exists(p.readouts_dir))
    throw DataError(p.readouts_dir + " is missing; run the run stage first");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(p.readouts_dir))
    if (e.path().extension() == ".csv") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no readout files in " + p.readouts_dir);

  std::map<std::string, std::map<std::string, BenchmarkMetrics>> metrics;
  std::map<std::string, std::map<std::string, std::string>> resource_texts;
  for (const std::string& file : files) {
    const std::string stem = fs::path(file).stem().string();
    const std::size_t sep = stem.rfind("__");
    if (sep == std::string::npos || sep == 0 || sep + 2 >= stem.size())
      throw DataError("readout file name lacks the <benchmark>__<monitor> form: " + file);
    const std::string bench = stem.substr(0, sep);
    const std::string kind = stem.substr(sep + 2);
    std::uint64_t hash = 0;
    const std::vector<Readout> rows = read_readout_csv(file, &hash);
    if (hash != cfg.config_hash) throw DataError(file + " was produced by a different config");
    metrics[bench][kind] = evaluate_readouts(bench, kind, rows);
    const std::string rpath = p.resources(bench, kind);
    if (fs::exists(rpath)) resource_texts[bench][kind] = read_text(rpath);
  }

  nlohmann::json report;
  report["config_hash"] = hash_hex(cfg.config_hash);
  nlohmann::json jbench = nlohmann::json::object();
  std::set<std::string> kind_set;
  for (const auto& [bench, per_kind] : metrics) {
    nlohmann::json jb = nlohmann::json::object();
    for (const auto& [kind, m] : per_kind) {
      kind_set.insert(kind);
      const auto side = [](const ConfusionCounts& c, double mccv, const RateSet& r) {
        return nlohmann::json{{"tp", c.tp},
                              {"fp", c.fp},
                              {"tn", c.tn},
                              {"fn", c.fn},
                              {"mcc", mccv},
                              {"fpr", r.fpr},
                              {"fnr", r.fnr},
                              {"precision", r.precision},
                              {"recall", r.recall},
                              {"micro_f1", r.micro_f1}};
      };
      nlohmann::json jm;
      jm["specific"] = side(m.specific, m.mcc_specific, m.rates_specific);
      jm["overall"] = side(m.overall, m.mcc_overall, m.rates_overall);
      jm["impact"] = {{"mcc_sut", m.impact.mcc_sut}, {"mcc_ml", m.impact.mcc_ml}};
      if (m.impact.change_defined)
        jm["impact"]["relative_change"] = m.impact.relative_change;
      else
        jm["impact"]["relative_change"] = nullptr;
      const auto rit = resource_texts.find(bench);
      if (rit != resource_texts.end() && rit->second.count(kind))
        jm["resources"] = nlohmann::json::parse(rit->second.at(kind));
      jb[kind] = std::move(jm);
    }
    jbench[bench] = std::move(jb);
  }
  report["benchmarks"] = std::move(jbench);

  // Cross-benchmark ranking needs the full monitor x benchmark grid.
  const std::vector<std::string> kinds(kind_set.begin(), kind_set.end());
  std::vector<std::string> bench_names;
  for (const auto& [bench, per_kind] : metrics) bench_names.push_back(bench);
  bool complete = kinds.size() >= 2 && bench_names.size() >= 2;
  for (const auto& [bench, per_kind] : metrics)
    for (const std::string& kind : kinds)
      if (!per_kind.count(kind)) {
        log::warn("benchmark " + bench + " lacks a readout for monitor " + kind +
                  "; skipping cross-benchmark statistics");
        complete = false;
      }
  if (complete) {
    std::vector<std::vector<double>> values;
    for (const std::string& bench : bench_names) {
      std::vector<double> row;
      for (const std::string& kind : kinds)
        row.push_back(metrics.at(bench).at(kind).mcc_specific);
      values.push_back(std::move(row));
    }
    const RankMatrix rm = make_ranks(kinds, bench_names, values);
    const FriedmanResult fr = friedman(rm);
    const double cd = nemenyi_cd(kinds.size(), bench_names.size());
    const CdDiagram diagram = cd_diagram(rm, cd);
    fs::create_directories(p.report_dir);
    write_text(p.cd_svg, diagram.svg);
    write_text(p.cd_txt, diagram.txt);

    nlohmann::json cross;
    cross["methods"] = kinds;
    cross["benchmarks"] = bench_names;
    nlohmann::json jr = nlohmann::json::object();
    for (std::size_t k = 0; k < kinds.size(); ++k) jr[kinds[k]] = rm.mean_ranks[k];
    cross["mean_ranks"] = std::move(jr);
    cross["chi2_F"] = fr.chi2;
    cross["df"] = fr.df;
    cross["p_value"] = fr.p;
    cross["alpha"] = 0.05;
    cross["cd"] = cd;
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : diagram.groups) {
      nlohmann::json jg = nlohmann::json::array();
      for (std::size_t idx : g) jg.push_back(kinds[idx]);
      groups.push_back(std::move(jg));
    }
    cross["groups"] = std::move(groups);
    report["cross_benchmark"] = std::move(cross);
  } else {
    report["cross_benchmark"] = nullptr;
  }

  fs::create_directories(p.report_dir);
  write_text(p.report_json, report.dump(2) + "\n");
  log::info("wrote " + p.report_json);
}

void cmd_report(const ExperimentConfig& cfg, std::ostream& os) {
  const Paths p = make_paths(cfg.out_dir);
  if (!fs::exists(p.report_json))
    throw DataError(p.report_json + " is missing; run the eval stage first");
  nlohmann::json report;
  try {
    report = nlohmann::json::parse(read_text(p.report_json));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad report json: ") + e.what());
  }

  std::ostringstream out;
  out << "experiment report (config " << report.value("config_hash", std::string("?"))
      << ")\n\n";

  out << "detection metrics per benchmark\n";
  out << "  benchmark                monitor  dimension  mcc      fpr      fnr      "
         "precision  recall   micro_f1\n";
  const nlohmann::json& benches = report.at("benchmarks");
  for (auto bit = benches.begin(); bit != benches.end(); ++bit) {
    for (auto mit = bit.value().begin(); mit != bit.value().end(); ++mit) {
      for (const char* dim : {"specific", "overall"}) {
        const nlohmann::json& side = mit.value().at(dim);
        char line[200];
        std::snprintf(line, sizeof(line),
                      "  %-24s %-8s %-10s %+.4f  %.4f   %.4f   %.4f     %.4f   %.4f\n",
                      bit.key().c_str(), mit.key().c_str(), dim,
                      side.at("mcc").get<double>(), side.at("fpr").get<double>(),
                      side.at("fnr").get<double>(), side.at("precision").get<double>(),
                      side.at("recall").get<double>(), side.at("micro_f1").get<double>());
        out << line;
      }
    }
  }

  out << "\nsystem impact (accuracy correlation with and without the monitor)\n";
  out << "  benchmark                monitor  mcc_sut  mcc_ml   relative_change\n";
  for (auto bit = benches.begin(); bit != benches.end(); ++bit) {
    for (auto mit = bit.value().begin(); mit != bit.value().end(); ++mit) {
      const nlohmann::json& imp = mit.value().at("impact");
      std::string rel = "undefined";
      if (!imp.at("relative_change").is_null())
        rel = fmtd("%+.1f%%", imp.at("relative_change").get<double>() * 100.0);
      char line[160];
      std::snprintf(line, sizeof(line), "  %-24s %-8s %+.4f  %+.4f  %s\n",
                    bit.key().c_str(), mit.key().c_str(),
                    imp.at("mcc_sut").get<double>(), imp.at("mcc_ml").get<double>(),
                    rel.c_str());
      out << line;
    }
  }

  // Mean per-instance timing per monitor, averaged over benchmarks.
  struct Agg {
    double ml = 0.0, sm = 0.0, sut = 0.0;
    std::uint64_t ml_bytes = 0, sm_bytes = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Agg> agg;
  for (auto bit = benches.begin(); bit != benches.end(); ++bit) {
    for (auto mit = bit.value().begin(); mit != bit.value().end(); ++mit) {
      if (!mit.value().contains("resources")) continue;
      const nlohmann::json& res = mit.value().at("resources");
      Agg& a = agg[mit.key()];
      a.ml += res.at("ml_time_s").at("mean").get<double>();
      a.sm += res.at("sm_time_s").at("mean").get<double>();
      a.sut += res.at("sut_time_s").at("mean").get<double>();
      a.ml_bytes = res.at("ml_bytes").get<std::uint64_t>();
      a.sm_bytes = res.at("sm_bytes").get<std::uint64_t>();
      ++a.n;
    }
  }
  if (!agg.empty()) {
    out << "\nper-instance time, mean seconds (share of the whole loop)\n";
    out << "  monitor  ml_time          sm_time                    sut_time\n";
    for (const auto& [kind, a] : agg) {
      const double n = static_cast<double>(a.n);
      const double ml = a.ml / n, sm = a.sm / n, sut = a.sut / n;
      char line[160];
      std::snprintf(line, sizeof(line), "  %-8s %.6f (%4.1f%%)  %.6f (%4.1f%%)  %.6f\n",
                    kind.c_str(), ml, sut > 0 ? 100.0 * ml / sut : 0.0, sm,
                    sut > 0 ? 100.0 * sm / sut : 0.0, sut);
      out << line;
    }
    out << "\nmemory (serialized artifact sizes)\n";
    bool wrote_ml = false;
    for (const auto& [kind, a] : agg) {
      if (!wrote_ml) {
        out << "  classifier: " << a.ml_bytes << " bytes ("
            << fmtd("%.2f", static_cast<double>(a.ml_bytes) / 1e6) << " MB)\n";
        wrote_ml = true;
      }
      out << "  " << kind << ": " << a.sm_bytes << " bytes ("
          << fmtd("%.2f", static_cast<double>(a.sm_bytes) / 1e6) << " MB)\n";
    }
  }

  const nlohmann::json& cross = report.at("cross_benchmark");
  if (!cross.is_null()) {
    out << "\ncross-benchmark statistics\n";
    out << "  mean ranks (1 = best):";
    const nlohmann::json& mr = cross.at("mean_ranks");
    for (auto it = mr.begin(); it != mr.end(); ++it)
      out << " " << it.key() << "=" << fmtd("%.3f", it.value().get<double>());
    out << "\n";
    out << "  chi2_F=" << fmtd("%.4f", cross.at("chi2_F").get<double>())
        << " df=" << cross.at("df").get<std::size_t>()
        << " p=" << fmtd("%.6g", cross.at("p_value").get<double>()) << "\n";
    out << "  critical difference=" << fmtd("%.4f", cross.at("cd").get<double>())
        << "; groups:";
    if (cross.at("groups").empty()) {
      out << " none";
    } else {
      for (const auto& g : cross.at("groups")) {
        out << " {";
        for (std::size_t i = 0; i < g.size(); ++i)
          out << (i ? " " : "") << g[i].get<std::string>();
        out << "}";
      }
    }
    out << "\n";
  }

  const std::string text = out.str();
  fs::create_directories(p.report_dir);
  write_text(p.report_txt, text);
  os << text;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"benchmark pipeline for image-classifier safety monitors"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  std::size_t workers = 1;
  std::string monitors_csv;

  app.add_option("--config", config_path, "experiment config file")->required();
  app.add_option("--out", out_override, "override the config's out_dir");
  app.add_option("--seed-override", seed_override, "rederive every seed from this value")
      ->each([&](const std::string&) { has_seed_override = true; });

  CLI::App* c_generate = app.add_subcommand("generate", "build benchmark containers");
  CLI::App* c_train = app.add_subcommand("train", "train the classifier and fit monitors");
  CLI::App* c_run = app.add_subcommand("run", "stream benchmarks through the system");
  c_run->add_option("--workers", workers, "parallel benchmark streams");
  c_run->add_option("--monitors", monitors_csv, "comma-separated monitor subset");
  CLI::App* c_eval = app.add_subcommand("eval", "compute metrics and statistics");
  CLI::App* c_report = app.add_subcommand("report", "print the evaluated report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (has_seed_override) apply_seed_override(cfg, seed_override);

    if (c_generate->parsed()) {
      cmd_generate(cfg);
    } else if (c_train->parsed()) {
      cmd_train(cfg);
    } else if (c_run->parsed()) {
      std::vector<std::string> only;
      if (!monitors_csv.empty()) {
        std::size_t start = 0;
        while (start <= monitors_csv.size()) {
          const std::size_t comma = monitors_csv.find(',', start);
          const std::string item = monitors_csv.substr(
              start, comma == std::string::npos ? std::string::npos : comma - start);
          if (!item.empty()) only.push_back(item);
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
      }
      cmd_run(cfg, workers, only);
    } else if (c_eval->parsed()) {
      cmd_eval(cfg);
    } else if (c_report->parsed()) {
      cmd_report(cfg, std::cout);
    }
    return 0;
  } catch (const ConfigError& e) {
    log::error(e.what());
    return 2;
  } catch (const Error& e) {
    log::error(e.what());
    return 3;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 3;
  }
}

}  // namespace oodbench
