// Copyright 2026 The mtlevo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "mtlevo/cli.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mtlevo/assembly.hpp"
#include "mtlevo/error.hpp"

namespace mtlevo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sha1_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw StateError("SHA-1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json manifest_json(const ExperimentConfig& cfg, const MultitaskSpec& spec) {
  const std::string data_hash = dataset_sha1(spec);
  const std::string config_text = config_to_json(cfg).dump();
  json tasks = json::array();
  for (const auto& t : spec.tasks()) {
    tasks.push_back({{"task_id", t.task_id},
                     {"classes", t.class_count},
                     {"train", t.split.train},
                     {"val", t.split.val},
                     {"test", t.split.test}});
  }
  return {{"seed", cfg.seed},
          {"algorithm", to_string(cfg.algorithm)},
          {"config_sha1", git_blob_sha1(config_text)},
          {"dataset_sha1", data_hash},
          {"input_sha1", git_blob_sha1(config_text + "\n" + data_hash)},
          {"tasks", tasks}};
}

json report_json(const ExperimentConfig& cfg, const MultitaskSpec& spec, const std::vector<double>& val,
                 const std::vector<double>& test, std::size_t params) {
  json ids = json::array();
  for (const auto& t : spec.tasks()) ids.push_back(t.task_id);
  return {{"algorithm", to_string(cfg.algorithm)},
          {"seed", cfg.seed},
          {"task_ids", ids},
          {"val_accuracy", val},
          {"test_accuracy", test},
          {"mean_val", mean(val)},
          {"mean_test", mean(test)},
          {"parameter_count", params}};
}

std::string plan_line(const ExperimentConfig& c) {
  std::ostringstream s;
  s << "plan: algorithm=" << to_string(c.algorithm) << " profile=" << to_string(c.profile)
    << " seed=" << c.seed;
  switch (c.algorithm) {
    case Algorithm::kSingle:
    case Algorithm::kSoft:
      s << " depth=" << c.depth << " filters=" << c.filters << " iterations=" << c.retrain_iterations;
      break;
    case Algorithm::kCtr:
      s << " modules=" << c.module_count << " filters=" << c.filters
        << " meta_iterations=" << c.meta_iterations << " iterations_per_meta=" << c.iterations_per_meta
        << " alpha=" << c.alpha;
      break;
    case Algorithm::kCm:
    case Algorithm::kCmsr:
    case Algorithm::kCmtr:
      s << " networks=" << c.networks_per_generation << " generations<=" << c.max_generations
        << " module_population=" << c.module_population << " module_species=" << c.module_species;
      if (c.algorithm == Algorithm::kCmsr) s << " blueprints=" << c.blueprint_population;
      if (c.algorithm == Algorithm::kCmtr) {
        s << " meta_iterations=" << c.meta_iterations << " iterations_per_meta=" << c.iterations_per_meta;
      } else {
        s << " train_iterations=" << c.train_iterations;
      }
      s << " sharing=" << to_string(c.sharing) << " n_top=" << c.n_top;
      break;
  }
  return s.str();
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  return sha1_hex(blob);
}

std::string dataset_sha1(const MultitaskSpec& spec) {
  std::string bytes;
  for (const auto& t : spec.tasks()) {
    bytes += t.task_id;
    bytes.push_back('\0');
    bytes += std::to_string(t.class_count) + ":" + std::to_string(t.examples.size()) + ";";
    for (const auto& ex : t.examples) {
      bytes += std::to_string(ex.label) + ",";
      const auto& v = ex.image.values();
      bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(v[0]));
    }
  }
  return sha1_hex(bytes);
}

std::string ctr_row_to_json(const CtrHistoryRow& row) {
  return json{{"meta_iteration", row.meta_iteration},
              {"champion_val", row.champion_val},
              {"mean_val", row.mean_val},
              {"best_avg_val", row.best_avg_val},
              {"replaced", row.replaced}}
      .dump();
}

int cmd_run(const ExperimentConfig& cfg, const fs::path& out_dir, bool dry_run, std::ostream& out,
            std::ostream& err) {
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  out << plan_line(cfg) << "\n";
  if (dry_run) return kExitOk;

  std::ofstream logfile;
  auto log = [&](const std::string& line) {
    out << line << "\n" << std::flush;
    if (logfile) logfile << line << "\n" << std::flush;
  };
  try {
    fs::create_directories(out_dir);
    logfile.open(out_dir / "run.log", std::ios::trunc);
    log(plan_line(cfg));
    write_text(out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");
    const auto spec = materialize(cfg.dataset);
    write_text(out_dir / "manifest.json", manifest_json(cfg, *spec).dump(2) + "\n");
    fs::remove(out_dir / "history.jsonl");
    fs::remove(out_dir / "checkpoint.json");

    json report;
    switch (cfg.algorithm) {
      case Algorithm::kSingle:
      case Algorithm::kSoft: {
        const JobOutcome o = run_job(make_fixed_job(cfg), *spec, true);
        report = report_json(cfg, *spec, o.val_accuracy, o.test_accuracy, o.parameter_count);
        break;
      }
      case Algorithm::kCtr: {
        const JobOutcome o = run_job(make_fixed_job(cfg), *spec, true, out_dir / "checkpoint.json");
        std::ofstream hist(out_dir / "history.jsonl", std::ios::trunc);
        for (const auto& row : o.ctr_history) {
          hist << ctr_row_to_json(row) << "\n";
          log("meta-iteration " + std::to_string(row.meta_iteration) + " mean val " +
              std::to_string(row.mean_val) + " best " + std::to_string(row.best_avg_val));
        }
        report = report_json(cfg, *spec, o.val_accuracy, o.test_accuracy, o.parameter_count);
        break;
      }
      case Algorithm::kCm:
      case Algorithm::kCmsr:
      case Algorithm::kCmtr: {
        Rng rng(mix_seed(cfg.seed, 0xC0E0));
        const PopulationConfig pcfg = make_population_config(cfg);
        Populations pops = init_populations(cfg.algorithm, pcfg, rng);
        Evaluator evaluator = local_evaluator();
        std::shared_ptr<Coordinator> coordinator;
        if (!cfg.coordinator.empty()) {
          HarnessOptions hopt;
          hopt.connect_timeout_s = cfg.connect_timeout_s;
          coordinator = std::make_shared<Coordinator>(cfg.coordinator, hopt);
          log("coordinator listening on port " + std::to_string(coordinator->port()));
          evaluator = coordinator_evaluator(coordinator);
        }
        std::ofstream hist(out_dir / "history.jsonl", std::ios::trunc);
        CoevolveResult res =
            run_generation_loop(make_plan(cfg), pcfg, std::move(pops), evaluator, rng, &hist, log);
        if (coordinator) coordinator->shutdown();
        log("retraining top " + std::to_string(cfg.n_top) + " networks");
        const RetrainReport rep = retrain_top(res.evaluated, cfg.n_top, retrain_config(cfg),
                                              retrain_ctr_config(cfg), *spec, mix_seed(cfg.seed, 0x5E7));
        write_text(out_dir / "best_network.json", json::parse(job_to_json(rep.best)).dump(2) + "\n");
        if (rep.checkpoint) write_checkpoint(*rep.checkpoint, out_dir / "checkpoint.json");
        report = report_json(cfg, *spec, rep.val_accuracy, rep.test_accuracy, rep.parameter_count);
        json cands = json::array();
        for (const auto& [id, v] : rep.candidates) cands.push_back({{"job_id", id}, {"long_val", v}});
        report["retrain_candidates"] = cands;
        report["generations"] = res.history.size();
        break;
      }
    }
    write_text(out_dir / "report.json", report.dump(2) + "\n");
    log("mean val " + std::to_string(report["mean_val"].get<double>()) + " mean test " +
        std::to_string(report["mean_test"].get<double>()) + " parameters " +
        std::to_string(report["parameter_count"].get<std::size_t>()));
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (logfile) logfile << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_report(const std::vector<fs::path>& histories, std::ostream& out, std::ostream& err) {
  std::ostringstream csv;
  csv << "run_id,step,best,mean\n";
  for (const auto& path : histories) {
    std::ifstream f(path);
    if (!f) {
      err << "error: cannot read " << path.string() << "\n";
      return kExitRuntime;
    }
    const std::string run_id =
        path.filename() == "history.jsonl" && path.has_parent_path() && !path.parent_path().filename().empty()
            ? path.parent_path().filename().string()
            : path.stem().string();
    std::string line;
    std::size_t rows = 0, lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        if (j.contains("generation")) {
          const HistoryRecord r = history_from_json(line);
          csv << run_id << "," << r.generation << "," << shortest(r.best) << "," << shortest(r.mean) << "\n";
        } else {
          csv << run_id << "," << j.at("meta_iteration").get<std::size_t>() << ","
              << shortest(j.at("best_avg_val").get<double>()) << ","
              << shortest(j.at("mean_val").get<double>()) << "\n";
        }
        ++rows;
      } catch (const std::exception& e) {
        err << "error: " << path.string() << ":" << lineno << ": " << e.what() << "\n";
        return kExitRuntime;
      }
    }
    if (rows == 0) {
      err << "error: " << path.string() << ": empty history\n";
      return kExitRuntime;
    }
  }
  out << csv.str();
  return kExitOk;
}

int cmd_export_dot(const fs::path& checkpoint, std::optional<std::size_t> module,
                   std::optional<std::size_t> task, std::ostream& out, std::ostream& err) {
  try {
    if (module.has_value() == task.has_value()) {
      err << "error: give exactly one of --module or --task\n";
      return kExitUsage;
    }
    const CtrCheckpoint ck = read_checkpoint(checkpoint);
    if (module) {
      if (*module >= ck.module_genomes.size()) {
        err << "error: checkpoint has " << ck.module_genomes.size() << " modules, no module " << *module
            << "\n";
        return kExitRuntime;
      }
      const std::string label =
          *module < ck.module_labels.size() ? ck.module_labels[*module] : "M" + std::to_string(*module + 1);
      out << to_dot(ck.module_genomes[*module], label);
      return kExitOk;
    }
    if (*task >= ck.champions.size()) {
      err << "error: checkpoint has " << ck.champions.size() << " tasks, no task " << *task << "\n";
      return kExitRuntime;
    }
    out << to_dot(ck.champions[*task].routing, "task_" + std::to_string(*task));
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_eval_test(const fs::path& run_dir, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = resolve_config(json::parse(read_text(run_dir / "config.json")));
    if (!fs::exists(run_dir / "checkpoint.json")) {
      err << "error: " << (run_dir / "checkpoint.json").string()
          << " not found; only CTR and CMTR runs keep a checkpoint (see report.json otherwise)\n";
      return kExitRuntime;
    }
    const CtrCheckpoint ck = read_checkpoint(run_dir / "checkpoint.json");
    const auto spec = materialize(cfg.dataset);
    const auto acc = evaluate_test(ck, *spec);
    out << std::setprecision(6);
    for (std::size_t t = 0; t < acc.size(); ++t) {
      out << spec->task(t).task_id << " " << acc[t] << "\n";
    }
    out << "mean " << mean(acc) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evolutionary multitask architecture search"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one experiment into an output directory");
  std::string config_file, algorithm, profile, synth, data_dir, coordinator, out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  bool dry_run = false;
  run->add_option("--config", config_file, "JSON config file (flat keys); flags override it");
  run->add_option("--algorithm", algorithm, "baseline-single|baseline-soft|cm|cmsr|ctr|cmtr");
  run->add_option("--profile", profile, "desk|paper");
  run->add_option("--seed", seed, "Run seed");
  run->add_option("--synth", synth, "Synthetic corpus TASKSxCLASSESxSIDE, e.g. 5x4x8");
  run->add_option("--data-dir", data_dir, "Image corpus root: <task>/<class>/<image>.pgm");
  run->add_option("--coordinator", coordinator, "Serve evaluations to workers on this host:port");
  run->add_option("--set", sets, "Override any config key: key=value (repeatable)");
  run->add_option("--out", out_dir, "Output directory (default runs/<algorithm>-seed<seed>)");
  run->add_flag("--dry-run", dry_run, "Print the resolved plan and exit");

  auto* report = app.add_subcommand("report", "CSV of history files on standard output");
  std::vector<std::string> histories;
  report->add_option("histories", histories, "history.jsonl files")->required();

  auto* dot = app.add_subcommand("export-dot", "DOT of a checkpointed module or task routing");
  std::string checkpoint;
  std::optional<std::size_t> module, task;
  dot->add_option("checkpoint", checkpoint, "checkpoint.json")->required();
  dot->add_option("--module", module, "Module index, from 0");
  dot->add_option("--task", task, "Task index, from 0");

  auto* worker = app.add_subcommand("worker", "Evaluate jobs for a coordinator until shutdown");
  std::string worker_addr, worker_id;
  worker->add_option("--coordinator", worker_addr,
                     std::string("host:port; defaults to $") + kCoordinatorEnv);
  worker->add_option("--id", worker_id, "Worker name in results");

  auto* eval = app.add_subcommand("eval-test", "Test accuracy of a run directory's checkpoint");
  std::string run_dir;
  eval->add_option("run_dir", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*run) {
    ExperimentConfig cfg;
    try {
      json flat = json::object();
      if (!config_file.empty()) flat = json::parse(read_text(config_file));
      if (!flat.is_object()) throw ConfigError("config file must hold a JSON object");
      if (run->count("--algorithm")) flat["algorithm"] = algorithm;
      if (run->count("--profile")) flat["profile"] = profile;
      if (run->count("--seed")) flat["seed"] = seed;
      if (run->count("--data-dir")) flat["data_dir"] = data_dir;
      if (run->count("--coordinator")) flat["coordinator"] = coordinator;
      if (run->count("--synth")) {
        std::size_t t = 0, c = 0, s = 0;
        char x1 = 0, x2 = 0;
        std::istringstream in(synth);
        if (!(in >> t >> x1 >> c >> x2 >> s) || x1 != 'x' || x2 != 'x' || in.peek() != EOF) {
          throw ConfigError("--synth expects TASKSxCLASSESxSIDE, got '" + synth + "'");
        }
        flat["data_dir"] = "";
        flat["synth_tasks"] = t;
        flat["synth_classes"] = c;
        flat["image_side"] = s;
      }
      for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        json v = json::parse(value, nullptr, false);
        flat[key] = v.is_discarded() ? json(value) : v;
      }
      cfg = resolve_config(flat);
    } catch (const json::exception& e) {
      err << "error: config: " << e.what() << "\n";
      return kExitUsage;
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    const fs::path dir = out_dir.empty() ? fs::path("runs") / (std::string(to_string(cfg.algorithm)) +
                                                               "-seed" + std::to_string(cfg.seed))
                                         : fs::path(out_dir);
    return cmd_run(cfg, dir, dry_run, out, err);
  }
  if (*report) {
    std::vector<fs::path> paths(histories.begin(), histories.end());
    return cmd_report(paths, out, err);
  }
  if (*dot) return cmd_export_dot(checkpoint, module, task, out, err);
  if (*eval) return cmd_eval_test(run_dir, out, err);
  if (*worker) {
    try {
      return run_worker(worker_addr, {}, worker_id);
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitUsage;
}

}  // namespace mtlevo
