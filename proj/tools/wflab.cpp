// wflab: synthesize, ingest, train, adapt, finetune, defend, evaluate, report.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wflab/checkpoint.hpp"
#include "wflab/config.hpp"
#include "wflab/dataset_io.hpp"
#include "wflab/defenses.hpp"
#include "wflab/domain.hpp"
#include "wflab/eval.hpp"
#include "wflab/model.hpp"
#include "wflab/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t env_seed_fallback() {
  if (const char* s = std::getenv("WFLAB_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw wflab::ConfigError("WFLAB_SEED is not a valid integer");
    }
  }
  return 1;
}

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw wflab::ConfigError("cannot create output directory " + dir.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw wflab::ConfigError("cannot write " + path.string());
  out << text;
}

void write_resolved_config(const fs::path& dir, const wflab::RunConfig& cfg) {
  write_text_file(dir / "resolved.cfg", cfg.to_text());
}

std::string history_text(const wflab::TrainResult& r) {
  std::ostringstream out;
  out << "epoch\ttrain_loss\tval_accuracy\tdomain_accuracy\tlambda\n";
  out << std::setprecision(9);
  for (const auto& e : r.history)
    out << e.epoch << "\t" << e.train_loss << "\t" << e.val_accuracy << "\t" << e.domain_accuracy
        << "\t" << e.lambda << "\n";
  out << "best_epoch = " << r.best_epoch << "\n";
  out << "best_val_accuracy = " << std::setprecision(9) << r.best_val_accuracy << "\n";
  return out.str();
}

json report_json(const wflab::EvalReport& r) {
  json j;
  j["accuracy"] = r.accuracy;
  j["total"] = r.total;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["confusion"] = r.confusion;
  return j;
}

// Canonical trace CSV: header plus one "timestamp_us,size_bytes" row per
// packet. The on-disk format is integer microseconds/bytes (matching the
// rounding the reader applies), so an identity defense is byte-stable.
std::string trace_csv_text(const wflab::Trace& t) {
  std::ostringstream out;
  out << "timestamp_us,size_bytes\n";
  for (const auto& p : t.packets)
    out << std::llround(p.timestamp_us) << "," << std::llround(p.size_bytes) << "\n";
  return out.str();
}

std::string trace_file_name(const wflab::Trace& t, int idx) {
  std::ostringstream name;
  name << "site" << std::setw(3) << std::setfill('0') << t.site_label << "_env" << std::setw(2)
       << t.env_id << "_" << std::setw(4) << idx;
  if (!t.epoch_tag.empty()) name << "_" << t.epoch_tag;
  name << ".csv";
  return name.str();
}

// Parse "siteNNN_envNN_IDX[_tag].csv"; unknown shapes get site/env 0 and
// the stem as the epoch tag.
wflab::Trace load_trace_csv(const fs::path& path) {
  int site = 0, env = 0;
  std::string tag = path.stem().string();
  if (std::sscanf(tag.c_str(), "site%d_env%d", &site, &env) == 2) {
    auto last = tag.rfind('_');
    auto prev = last == std::string::npos ? std::string::npos : tag.rfind('_', last - 1);
    std::string tail = last == std::string::npos ? "" : tag.substr(last + 1);
    bool tail_is_index = !tail.empty() && tail.find_first_not_of("0123456789") == std::string::npos;
    tag = tail_is_index || prev == std::string::npos ? "" : tail;
  }
  wflab::Trace t = wflab::ingest_csv_file(path.string(), site, env, tag);
  return t;
}

std::vector<wflab::SampleVector> load_datasets(const std::vector<std::string>& paths) {
  std::vector<wflab::SampleVector> all;
  for (const auto& p : paths) {
    auto part = wflab::read_dataset_file(p);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

wflab::SynthConfig resolve_synth(const wflab::RunConfig& cfg) {
  if (!cfg.synth.profile_file.empty())
    return wflab::parse_synth_config_file(cfg.synth.profile_file);
  std::uint64_t seed = cfg.synth.master_seed ? cfg.synth.master_seed : cfg.seed;
  wflab::SynthConfig sc = wflab::default_corpus(cfg.synth.n_sites, cfg.synth.n_envs, seed);
  sc.packets_per_trace = cfg.synth.packets_per_trace;
  sc.traces_per_site_env = cfg.synth.traces_per_site_env;
  return sc;
}

int run_synth(const wflab::RunConfig& cfg, bool write_csv) {
  if (cfg.out_dir.empty()) throw wflab::ConfigError("synth: --out is required");
  fs::path out(cfg.out_dir);
  ensure_out_dir(out / "windows");
  wflab::SynthConfig sc = resolve_synth(cfg);
  std::vector<wflab::Trace> traces = wflab::generate_corpus(sc);
  int stride = cfg.synth.stride > 0 ? cfg.synth.stride : cfg.synth.window;

  std::map<std::pair<int, int>, std::vector<wflab::SampleVector>> per_pair;
  std::map<std::pair<int, int>, int> trace_counter;
  if (write_csv) ensure_out_dir(out / "traces");
  for (const auto& t : traces) {
    auto w = wflab::extract_windows(t, cfg.synth.window, stride);
    auto& dst = per_pair[{t.site_label, t.env_id}];
    dst.insert(dst.end(), w.begin(), w.end());
    if (write_csv) {
      int idx = trace_counter[{t.site_label, t.env_id}]++;
      write_text_file(out / "traces" / trace_file_name(t, idx), trace_csv_text(t));
    }
  }
  std::ostringstream manifest;
  manifest << "seed = " << sc.master_seed << "\n";
  manifest << "sites = " << sc.sites.size() << "\n";
  manifest << "envs = " << sc.envs.size() << "\n";
  manifest << "traces = " << traces.size() << "\n";
  for (auto& [key, windows] : per_pair) {
    std::ostringstream name;
    name << "site" << std::setw(3) << std::setfill('0') << key.first << "_env" << std::setw(2)
         << key.second << ".wfds";
    wflab::write_dataset_file((out / "windows" / name.str()).string(), windows);
    manifest << name.str() << " = " << windows.size() << "\n";
  }
  write_text_file(out / "synth_profile.cfg", wflab::to_text(sc));
  write_text_file(out / "manifest.txt", manifest.str());
  write_resolved_config(out, cfg);
  std::cout << "synth: " << traces.size() << " traces, " << per_pair.size()
            << " dataset files under " << (out / "windows").string() << "\n";
  return 0;
}

struct Splits {
  std::vector<wflab::SampleVector> train, val, test;
};

Splits resolve_splits(const std::vector<std::string>& data, const std::string& val_path,
                      const std::string& test_path, std::uint64_t seed) {
  Splits s;
  std::vector<wflab::SampleVector> all = load_datasets(data);
  if (!val_path.empty()) {
    s.train = std::move(all);
    s.val = wflab::read_dataset_file(val_path);
    if (!test_path.empty()) s.test = wflab::read_dataset_file(test_path);
    return s;
  }
  wflab::DatasetSplit split = wflab::split_dataset(all, 0.7, 0.15, 0.15, seed);
  s.train = std::move(split.train);
  s.val = std::move(split.validation);
  s.test = std::move(split.test);
  return s;
}

void write_train_outputs(const fs::path& out, const wflab::TrainedModel& model,
                         const wflab::TrainResult& result, const Splits& splits,
                         const wflab::RunConfig& cfg) {
  wflab::save_model_file((out / "model.wfck").string(), model);
  std::string hist = history_text(result);
  if (!splits.test.empty()) {
    wflab::write_dataset_file((out / "test.wfds").string(), splits.test);
    double acc = wflab::evaluate(model, splits.test).accuracy;
    std::ostringstream line;
    line << "test_accuracy = " << std::setprecision(9) << acc << "\n";
    hist += line.str();
    std::cout << "test accuracy: " << acc << "\n";
  }
  write_text_file(out / "history.txt", hist);
  write_resolved_config(out, cfg);
  std::cout << "best validation accuracy: " << result.best_val_accuracy << " (epoch "
            << result.best_epoch << ")\n";
}

int run_train(const wflab::RunConfig& cfg, const std::vector<std::string>& data,
              const std::string& val_path, const std::string& test_path) {
  if (cfg.out_dir.empty()) throw wflab::ConfigError("train: --out is required");
  if (data.empty()) throw wflab::ConfigError("train: --data is required");
  fs::path out(cfg.out_dir);
  ensure_out_dir(out);
  Splits splits = resolve_splits(data, val_path, test_path, wflab::mix_seed(cfg.seed, 0x5B));
  int classes = cfg.model.classes;
  if (classes <= 0) {
    std::set<int> sites;
    for (const auto& s : splits.train) sites.insert(s.site_label);
    classes = static_cast<int>(sites.size());
  }
  wflab::ArchitectureConfig arch =
      wflab::ArchitectureConfig::make(cfg.model.preset, classes, cfg.model.domains);
  wflab::TrainConfig tc = cfg.train.cfg;
  tc.seed = cfg.seed;
  wflab::TrainedModel model = wflab::build_model(arch, cfg.seed);
  wflab::TrainResult result = wflab::train(model, splits.train, splits.val, tc);
  write_train_outputs(out, model, result, splits, cfg);
  return 0;
}

int run_adapt(const wflab::RunConfig& cfg, const std::vector<std::string>& data,
              const std::string& val_path, const std::string& target_path) {
  if (cfg.out_dir.empty()) throw wflab::ConfigError("adapt: --out is required");
  if (data.empty()) throw wflab::ConfigError("adapt: --data is required");
  fs::path out(cfg.out_dir);
  ensure_out_dir(out);
  wflab::DAConfig da = cfg.da.cfg;
  wflab::TrainConfig tc = cfg.train.cfg;
  tc.seed = cfg.seed;
  Splits splits;
  wflab::TrainResult result;
  wflab::TrainedModel model;
  if (da.mode == wflab::DomainMode::Binary) {
    if (target_path.empty())
      throw wflab::ConfigError("adapt: --target is required in binary mode");
    da.domain_count = 2;
    splits = resolve_splits(data, val_path, "", wflab::mix_seed(cfg.seed, 0x5B));
    std::vector<wflab::SampleVector> target = wflab::read_dataset_file(target_path);
    int classes = cfg.model.classes;
    if (classes <= 0) {
      std::set<int> sites;
      for (const auto& s : splits.train) sites.insert(s.site_label);
      classes = static_cast<int>(sites.size());
    }
    model = wflab::build_model(
        wflab::ArchitectureConfig::make(cfg.model.preset, classes, da.domain_count), cfg.seed);
    result = wflab::da_train(model, splits.train, splits.val, target, tc, da);
  } else {
    if (data.size() < 2)
      throw wflab::ConfigError("adapt: multi-index mode needs >= 2 --data files");
    da.domain_count = static_cast<int>(data.size());
    std::vector<std::vector<wflab::SampleVector>> domains;
    std::vector<wflab::SampleVector> pooled;
    for (const auto& p : data) {
      domains.push_back(wflab::read_dataset_file(p));
      pooled.insert(pooled.end(), domains.back().begin(), domains.back().end());
    }
    std::vector<wflab::SampleVector> val;
    if (!val_path.empty()) {
      val = wflab::read_dataset_file(val_path);
    } else {
      wflab::DatasetSplit vs =
          wflab::split_dataset(pooled, 0.85, 0.15, 0.0, wflab::mix_seed(cfg.seed, 0x5B));
      val = std::move(vs.validation);
    }
    int classes = cfg.model.classes;
    if (classes <= 0) {
      std::set<int> sites;
      for (const auto& s : pooled) sites.insert(s.site_label);
      classes = static_cast<int>(sites.size());
    }
    model = wflab::build_model(
        wflab::ArchitectureConfig::make(cfg.model.preset, classes, da.domain_count), cfg.seed);
    result = wflab::multi_domain_train(model, domains, val, tc, da);
    splits.val = std::move(val);
  }
  write_train_outputs(out, model, result, splits, cfg);
  return 0;
}

int run_finetune(const wflab::RunConfig& cfg, const std::string& model_path,
                 const std::vector<std::string>& data, const std::string& val_path,
                 const std::string& freeze, bool reinit_head) {
  if (cfg.out_dir.empty()) throw wflab::ConfigError("finetune: --out is required");
  if (model_path.empty()) throw wflab::ConfigError("finetune: --model is required");
  if (data.empty()) throw wflab::ConfigError("finetune: --data is required");
  fs::path out(cfg.out_dir);
  ensure_out_dir(out);
  wflab::TrainedModel model = wflab::load_model_file(model_path);
  Splits splits = resolve_splits(data, val_path, "", wflab::mix_seed(cfg.seed, 0x5B));
  wflab::FreezeMask mask;
  if (freeze == "conv")
    mask = wflab::FreezeMask::conv_stack(model);
  else if (freeze == "all")
    mask = wflab::FreezeMask::all(model);
  else if (freeze != "none")
    throw wflab::ConfigError("finetune: --freeze must be conv|all|none");
  wflab::TrainConfig tc = cfg.train.cfg;
  tc.seed = cfg.seed;
  wflab::TrainResult result = wflab::finetune(model, splits.train, splits.val, mask, tc,
                                              reinit_head);
  write_train_outputs(out, model, result, splits, cfg);
  return 0;
}

int run_defend(const wflab::RunConfig& cfg, const std::string& in_dir) {
  if (cfg.out_dir.empty()) throw wflab::ConfigError("defend: --out is required");
  if (in_dir.empty()) throw wflab::ConfigError("defend: --in is required");
  fs::path in(in_dir);
  if (!fs::is_directory(in)) throw wflab::DataError("defend: not a directory: " + in_dir);
  fs::path out(cfg.out_dir);
  ensure_out_dir(out);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw wflab::DataError("defend: no .csv traces under " + in_dir);

  std::vector<wflab::Trace> traces;
  std::vector<bool> is_train;
  for (const auto& f : files) {
    traces.push_back(load_trace_csv(f));
    // in test-only mode, files tagged "train" in the name keep their
    // original contents
    is_train.push_back(f.filename().string().find("train") != std::string::npos);
  }
  wflab::DefenseConfig dc = cfg.defense.cfg;
  if (dc.kind == wflab::DefenseConfig::Kind::Injection && dc.injection.pool.empty())
    dc.injection.pool = wflab::make_trigger_pool(
        cfg.defense.pool_patterns, cfg.defense.pool_count_per_pattern, 50, 250,
        wflab::mix_seed(cfg.seed, 0x7001));
  if (dc.kind == wflab::DefenseConfig::Kind::Inflation)
    dc.inflation.seed = cfg.seed;
  else
    dc.injection.seed = cfg.seed;
  wflab::DefenseOutcome res = wflab::defend_dataset(traces, dc, cfg.defense.mode, is_train);

  for (size_t i = 0; i < files.size(); ++i)
    write_text_file(out / files[i].filename(), trace_csv_text(res.traces[i]));
  std::ostringstream manifest;
  manifest << std::setprecision(9);
  manifest << "traces = " << res.traces.size() << "\n";
  manifest << "delay_multiplier = " << res.mean_overhead.delay_multiplier << "\n";
  manifest << "byte_overhead = " << res.mean_overhead.byte_overhead << "\n";
  manifest << "packet_overhead = " << res.mean_overhead.packet_overhead << "\n";
  write_text_file(out / "overhead.txt", manifest.str());
  write_resolved_config(out, cfg);
  std::cout << "defended " << res.traces.size()
            << " traces; mean delay_multiplier = " << res.mean_overhead.delay_multiplier
            << ", byte_overhead = " << res.mean_overhead.byte_overhead
            << ", packet_overhead = " << res.mean_overhead.packet_overhead << "\n";
  return 0;
}

int run_eval(const wflab::RunConfig& cfg, const std::string& model_path,
             const std::vector<std::string>& data) {
  if (model_path.empty()) throw wflab::ConfigError("eval: --model is required");
  if (data.empty()) throw wflab::ConfigError("eval: --data is required");
  wflab::TrainedModel model = wflab::load_model_file(model_path);
  std::vector<wflab::SampleVector> test = load_datasets(data);
  wflab::EvalReport r = wflab::evaluate(model, test);
  std::cout << std::setprecision(9) << "accuracy = " << r.accuracy << " (" << r.total
            << " samples)\n";
  if (!cfg.out_dir.empty()) {
    fs::path out(cfg.out_dir);
    ensure_out_dir(out);
    write_text_file(out / "eval.json", report_json(r).dump(2) + "\n");
    write_resolved_config(out, cfg);
  }
  return 0;
}

int run_ingest(const wflab::RunConfig& cfg, const std::vector<std::string>& inputs) {
  if (cfg.out_dir.empty()) throw wflab::ConfigError("ingest: --out is required");
  if (inputs.empty()) throw wflab::ConfigError("ingest: needs at least one input");
  fs::path out(cfg.out_dir);
  ensure_out_dir(out);
  int stride = cfg.synth.stride > 0 ? cfg.synth.stride : cfg.synth.window;
  std::vector<wflab::SampleVector> windows;
  for (const auto& spec : inputs) {
    // path[:site[:env]]; otherwise site/env parsed from the file name
    std::string path = spec;
    int site = -1, env = -1;
    auto c1 = spec.rfind(':');
    if (c1 != std::string::npos && c1 > 1) {
      auto c0 = spec.rfind(':', c1 - 1);
      try {
        if (c0 != std::string::npos && c0 > 1) {
          site = std::stoi(spec.substr(c0 + 1, c1 - c0 - 1));
          env = std::stoi(spec.substr(c1 + 1));
          path = spec.substr(0, c0);
        } else {
          site = std::stoi(spec.substr(c1 + 1));
          env = 0;
          path = spec.substr(0, c1);
        }
      } catch (const std::exception&) {
        path = spec;
        site = env = -1;
      }
    }
    wflab::Trace t = site >= 0 ? wflab::ingest_csv_file(path, site, env)
                               : load_trace_csv(path);
    auto w = wflab::extract_windows(t, cfg.synth.window, stride);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  wflab::write_dataset_file((out / "data.wfds").string(), windows);
  write_resolved_config(out, cfg);
  std::cout << "ingested " << windows.size() << " windows -> " << (out / "data.wfds").string()
            << "\n";
  return 0;
}

std::string render_results_table(const json& records) {
  std::ostringstream out;
  if (records.empty()) return out.str();
  out << std::left << std::setw(28) << "cell" << std::setw(20) << "config_hash"
      << "accuracy\n";
  for (const auto& rec : records) {
    out << std::left << std::setw(28) << rec.value("cell", std::string("-")) << std::setw(20)
        << rec.value("config_hash", std::string("-")) << std::setprecision(6)
        << rec.value("accuracy", 0.0) << "\n";
  }
  return out.str();
}

int run_report(const wflab::RunConfig& cfg, const std::string& results_path) {
  // rendering mode: turn an existing results file into a table
  if (!results_path.empty()) {
    std::ifstream in(results_path);
    if (!in) throw wflab::DataError("report: cannot open " + results_path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    json records = json::array();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      json parsed = json::parse(text, nullptr, false);
      if (parsed.is_discarded()) throw wflab::DataError("report: bad results file");
      records = parsed.is_array() ? parsed : json::array({parsed});
    }
    std::cout << render_results_table(records);
    return 0;
  }

  // experiment mode: run the grid described by [experiment]
  if (cfg.experiment.kind.empty())
    throw wflab::ConfigError("report: need --results or an [experiment] section");
  if (cfg.out_dir.empty()) throw wflab::ConfigError("report: --out is required");
  fs::path out(cfg.out_dir);
  ensure_out_dir(out);

  wflab::SynthConfig sc = resolve_synth(cfg);
  std::vector<wflab::Trace> traces = wflab::generate_corpus(sc);
  int stride = cfg.synth.stride > 0 ? cfg.synth.stride : cfg.synth.window;
  std::vector<wflab::SampleVector> windows;
  for (const auto& t : traces) {
    auto w = wflab::extract_windows(t, cfg.synth.window, stride);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  wflab::TrainConfig tc = cfg.train.cfg;
  tc.seed = cfg.seed;
  std::uint64_t cfg_hash = wflab::fnv1a64(cfg.to_text());

  json records = json::array();
  std::ostringstream table;
  table << std::setprecision(4);
  auto add = [&](const std::string& cell, double acc, const json& extra = json::object()) {
    json rec = extra;
    rec["cell"] = cell;
    rec["config_hash"] = std::to_string(cfg_hash);
    rec["accuracy"] = acc;
    records.push_back(rec);
  };

  const std::string& kind = cfg.experiment.kind;
  if (kind == "cross-domain") {
    wflab::CrossDomainMatrix m = wflab::cross_domain_run(windows, cfg.model.preset, tc);
    table << "train\\test";
    for (int e : m.env_ids) table << "\tenv" << e;
    table << "\n";
    for (size_t i = 0; i < m.env_ids.size(); ++i) {
      table << "env" << m.env_ids[i];
      for (size_t j = 0; j < m.env_ids.size(); ++j) {
        table << "\t" << m.accuracy[i][j];
        add("env" + std::to_string(m.env_ids[i]) + "->env" + std::to_string(m.env_ids[j]),
            m.accuracy[i][j]);
      }
      table << "\n";
    }
  } else if (kind == "learning-curve") {
    if (cfg.experiment.target_env < 0)
      throw wflab::ConfigError("report: learning-curve needs target_env");
    table << "samples_per_class\tscratch\tfinetune\n";
    auto scratch = wflab::learning_curve_run(windows, cfg.experiment.sizes,
                                             wflab::CurveMode::Scratch,
                                             cfg.experiment.target_env, cfg.model.preset, tc);
    auto fine = wflab::learning_curve_run(windows, cfg.experiment.sizes,
                                          wflab::CurveMode::PretrainFinetune,
                                          cfg.experiment.target_env, cfg.model.preset, tc);
    for (size_t i = 0; i < scratch.size(); ++i) {
      table << scratch[i].samples_per_class << "\t" << scratch[i].accuracy << "\t"
            << fine[i].accuracy << "\n";
      add("scratch@" + std::to_string(scratch[i].samples_per_class), scratch[i].accuracy);
      add("finetune@" + std::to_string(fine[i].samples_per_class), fine[i].accuracy);
    }
  } else if (kind == "website-scaling") {
    auto pts = wflab::website_scaling_run(windows, cfg.experiment.counts, cfg.model.preset, tc);
    table << "sites\taccuracy\n";
    for (auto& [n, acc] : pts) {
      table << n << "\t" << acc << "\n";
      add("sites@" + std::to_string(n), acc);
    }
  } else if (kind == "ablation") {
    auto res = wflab::ablation_run(
        windows,
        {wflab::ChannelMask::Both, wflab::ChannelMask::JitterOnly, wflab::ChannelMask::SizeOnly},
        cfg.model.preset, tc);
    table << "mask\taccuracy\n";
    for (auto& [mask, rep] : res) {
      table << wflab::to_string(mask) << "\t" << rep.accuracy << "\n";
      add(std::string("mask:") + wflab::to_string(mask), rep.accuracy);
    }
  } else if (kind == "defense-curve") {
    table << "setting\taccuracy\tdelay_multiplier\tbyte_overhead\tpacket_overhead\n";
    std::vector<int> settings =
        cfg.experiment.sizes.empty() ? std::vector<int>{0, 15, 30, 60, 90} : cfg.experiment.sizes;
    for (int setting : settings) {
      wflab::DefenseConfig dc = cfg.defense.cfg;
      wflab::DefenseCurvePoint pt;
      std::string cell;
      if (dc.kind == wflab::DefenseConfig::Kind::Inflation) {
        dc.inflation.coefficient = setting;
        dc.inflation.seed = wflab::mix_seed(cfg.seed, 0xDEF, setting);
        cell = "a=" + std::to_string(setting);
        pt = wflab::defense_point_run(traces, dc, cfg.model.preset, tc, cfg.synth.window);
      } else {
        dc.injection.packets_per_span = setting;
        dc.injection.seed = wflab::mix_seed(cfg.seed, 0xDEF, setting);
        if (dc.injection.pool.empty())
          dc.injection.pool = wflab::make_trigger_pool(
              cfg.defense.pool_patterns, cfg.defense.pool_count_per_pattern, 50, 250,
              wflab::mix_seed(cfg.seed, 0x7001));
        cell = "k=" + std::to_string(setting);
        pt = dc.injection.rotation == wflab::TriggerRotation::PerDaySimulated
                 ? wflab::injection_day_split_run(traces, dc, cfg.model.preset, tc, 0.75,
                                                  cfg.synth.window)
                 : wflab::defense_point_run(traces, dc, cfg.model.preset, tc, cfg.synth.window);
      }
      table << cell << "\t" << pt.accuracy << "\t" << pt.overhead.delay_multiplier << "\t"
            << pt.overhead.byte_overhead << "\t" << pt.overhead.packet_overhead << "\n";
      add(cell, pt.accuracy,
          {{"delay_multiplier", pt.overhead.delay_multiplier},
           {"byte_overhead", pt.overhead.byte_overhead},
           {"packet_overhead", pt.overhead.packet_overhead}});
    }
  } else {
    throw wflab::ConfigError("report: unknown experiment kind " + kind);
  }

  write_text_file(out / "report.txt", table.str());
  write_text_file(out / "results.json", records.dump(2) + "\n");
  write_resolved_config(out, cfg);
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wflab: website-fingerprinting laboratory"};
  app.require_subcommand(1);

  std::string config_path, synth_config_path, out_dir, val_path, test_path, target_path;
  std::string model_path, freeze = "none", in_dir, results_path;
  std::vector<std::string> data, inputs;
  bool write_csv = false, reinit_head = false;

  // flags shared across subcommands; -1/empty means "not set on the CLI"
  std::int64_t seed = -1;
  int sites = -1, envs = -1, traces = -1, packets = -1, window = -1, stride = -1;
  int classes = -1, epochs = -1, batch = -1, patience = -1, k = -1, span = -1;
  int domain_count = -1, target_env = -1;
  double lr = -1.0, momentum = -1.0, lambda_d = -1.0, a = -1.0;
  std::string preset, mask, optimizer, domain_mode, lambda_ramp, defense_kind, basis, targets;
  std::string rotation, defend_mode, experiment_kind, sizes_list, counts_list;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "global seed (falls back to WFLAB_SEED, then 1)");
  };
  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--preset", preset, "tiny|base|large");
    cmd->add_option("--classes", classes);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch", batch);
    cmd->add_option("--patience", patience);
    cmd->add_option("--lr", lr);
    cmd->add_option("--momentum", momentum);
    cmd->add_option("--optimizer", optimizer, "adam|sgd");
    cmd->add_option("--mask", mask, "both|jitter|size");
  };

  CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(c_synth);
  c_synth->add_option("--synth-config", synth_config_path, "full synth profile file");
  c_synth->add_option("--sites", sites);
  c_synth->add_option("--envs", envs);
  c_synth->add_option("--traces", traces, "traces per (site, env)");
  c_synth->add_option("--packets", packets, "packets per trace");
  c_synth->add_option("--window", window);
  c_synth->add_option("--stride", stride);
  c_synth->add_flag("--csv", write_csv, "also write per-trace CSV files");

  CLI::App* c_ingest = app.add_subcommand("ingest", "window CSV traces into a WFDS file");
  add_common(c_ingest);
  c_ingest->add_option("inputs", inputs, "trace CSVs, optionally path:site:env");
  c_ingest->add_option("--window", window);
  c_ingest->add_option("--stride", stride);

  CLI::App* c_train = app.add_subcommand("train", "supervised training");
  add_common(c_train);
  add_train_flags(c_train);
  c_train->add_option("--data", data, "training WFDS file(s)");
  c_train->add_option("--val", val_path, "validation WFDS (default: split from --data)");
  c_train->add_option("--test", test_path, "test WFDS (with --val)");

  CLI::App* c_adapt = app.add_subcommand("adapt", "domain-adversarial training");
  add_common(c_adapt);
  add_train_flags(c_adapt);
  c_adapt->add_option("--data", data, "labeled source WFDS file(s); one per domain in multi-index mode");
  c_adapt->add_option("--val", val_path);
  c_adapt->add_option("--target", target_path, "unlabeled target WFDS (binary mode)");
  c_adapt->add_option("--lambda-d", lambda_d);
  c_adapt->add_option("--domain-mode", domain_mode, "binary|multi-index");
  c_adapt->add_option("--domain-count", domain_count);
  c_adapt->add_option("--lambda-ramp", lambda_ramp, "start:end:epochs");

  CLI::App* c_finetune = app.add_subcommand("finetune", "freeze-and-finetune a checkpoint");
  add_common(c_finetune);
  add_train_flags(c_finetune);
  c_finetune->add_option("--model", model_path, "input checkpoint");
  c_finetune->add_option("--data", data);
  c_finetune->add_option("--val", val_path);
  c_finetune->add_option("--freeze", freeze, "conv|all|none");
  c_finetune->add_flag("--reinit-head", reinit_head);

  CLI::App* c_defend = app.add_subcommand("defend", "apply a defense to trace CSVs");
  add_common(c_defend);
  c_defend->add_option("--in", in_dir, "directory of trace CSVs");
  c_defend->add_option("--kind", defense_kind, "inflation|injection");
  c_defend->add_option("--a", a, "inflation coefficient");
  c_defend->add_option("--basis", basis, "mean|stddev");
  c_defend->add_option("--targets", targets, "jitter|size|both");
  c_defend->add_option("--k", k, "injected packets per span");
  c_defend->add_option("--span", span);
  c_defend->add_option("--rotation", rotation, "per-trace|per-day-simulated");
  c_defend->add_option("--mode", defend_mode, "both|test-only");

  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(c_eval);
  c_eval->add_option("--model", model_path);
  c_eval->add_option("--data", data);

  CLI::App* c_report = app.add_subcommand("report", "run an experiment grid or render results");
  add_common(c_report);
  add_train_flags(c_report);
  c_report->add_option("--results", results_path, "render an existing results file");
  c_report->add_option("--experiment", experiment_kind,
                       "cross-domain|learning-curve|website-scaling|ablation|defense-curve");
  c_report->add_option("--sizes", sizes_list, "comma-separated grid values");
  c_report->add_option("--counts", counts_list);
  c_report->add_option("--target-env", target_env);
  c_report->add_option("--sites", sites);
  c_report->add_option("--envs", envs);
  c_report->add_option("--traces", traces);
  c_report->add_option("--packets", packets);
  c_report->add_option("--kind", defense_kind, "defense kind for defense-curve");
  c_report->add_option("--rotation", rotation);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // bad usage is a configuration error; --help stays a clean exit
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    wflab::RunConfig cfg;
    if (!config_path.empty()) cfg = wflab::parse_run_config_file(config_path);
    if (config_path.empty() && seed < 0) cfg.seed = env_seed_fallback();
    // flags override file values
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!synth_config_path.empty()) cfg.synth.profile_file = synth_config_path;
    if (sites >= 0) cfg.synth.n_sites = sites;
    if (envs >= 0) cfg.synth.n_envs = envs;
    if (traces >= 0) cfg.synth.traces_per_site_env = traces;
    if (packets >= 0) cfg.synth.packets_per_trace = packets;
    if (window >= 0) cfg.synth.window = window;
    if (stride >= 0) cfg.synth.stride = stride;
    if (!preset.empty()) cfg.model.preset = wflab::preset_from_string(preset);
    if (classes >= 0) cfg.model.classes = classes;
    if (epochs >= 0) cfg.train.cfg.epochs = epochs;
    if (batch >= 0) cfg.train.cfg.batch_size = batch;
    if (patience >= 0) cfg.train.cfg.patience = patience;
    if (lr >= 0.0) cfg.train.cfg.optimizer.lr = lr;
    if (momentum >= 0.0) cfg.train.cfg.optimizer.momentum = momentum;
    if (!optimizer.empty()) {
      if (optimizer == "adam")
        cfg.train.cfg.optimizer.kind = wflab::OptimizerKind::Adam;
      else if (optimizer == "sgd")
        cfg.train.cfg.optimizer.kind = wflab::OptimizerKind::SgdMomentum;
      else
        throw wflab::ConfigError("unknown optimizer " + optimizer);
    }
    if (!mask.empty()) cfg.train.cfg.mask = wflab::channel_mask_from_string(mask);
    if (lambda_d >= 0.0) cfg.da.cfg.lambda_d = lambda_d;
    if (!domain_mode.empty()) {
      if (domain_mode == "binary")
        cfg.da.cfg.mode = wflab::DomainMode::Binary;
      else if (domain_mode == "multi-index")
        cfg.da.cfg.mode = wflab::DomainMode::MultiIndex;
      else
        throw wflab::ConfigError("unknown domain mode " + domain_mode);
    }
    if (domain_count >= 0) cfg.da.cfg.domain_count = domain_count;
    if (!lambda_ramp.empty()) {
      std::istringstream parts(lambda_ramp);
      std::string p;
      std::vector<double> vals;
      while (std::getline(parts, p, ':')) vals.push_back(std::stod(p));
      if (vals.size() != 3) throw wflab::ConfigError("--lambda-ramp needs start:end:epochs");
      cfg.da.cfg.schedule.ramp = true;
      cfg.da.cfg.schedule.start = vals[0];
      cfg.da.cfg.schedule.end = vals[1];
      cfg.da.cfg.schedule.ramp_epochs = static_cast<int>(vals[2]);
    }
    if (!defense_kind.empty()) {
      if (defense_kind == "inflation")
        cfg.defense.cfg.kind = wflab::DefenseConfig::Kind::Inflation;
      else if (defense_kind == "injection")
        cfg.defense.cfg.kind = wflab::DefenseConfig::Kind::Injection;
      else
        throw wflab::ConfigError("unknown defense kind " + defense_kind);
    }
    if (a >= 0.0) cfg.defense.cfg.inflation.coefficient = a;
    if (!basis.empty()) {
      if (basis == "mean")
        cfg.defense.cfg.inflation.basis = wflab::InflationBasis::Mean;
      else if (basis == "stddev")
        cfg.defense.cfg.inflation.basis = wflab::InflationBasis::Stddev;
      else
        throw wflab::ConfigError("unknown basis " + basis);
    }
    if (!targets.empty()) {
      if (targets == "jitter")
        cfg.defense.cfg.inflation.targets = wflab::InflationTargets::Jitter;
      else if (targets == "size")
        cfg.defense.cfg.inflation.targets = wflab::InflationTargets::Size;
      else if (targets == "both")
        cfg.defense.cfg.inflation.targets = wflab::InflationTargets::Both;
      else
        throw wflab::ConfigError("unknown targets " + targets);
    }
    if (k >= 0) cfg.defense.cfg.injection.packets_per_span = k;
    if (span >= 0) cfg.defense.cfg.injection.span = span;
    if (!rotation.empty()) {
      if (rotation == "per-trace")
        cfg.defense.cfg.injection.rotation = wflab::TriggerRotation::PerTrace;
      else if (rotation == "per-day-simulated")
        cfg.defense.cfg.injection.rotation = wflab::TriggerRotation::PerDaySimulated;
      else
        throw wflab::ConfigError("unknown rotation " + rotation);
    }
    if (!defend_mode.empty()) {
      if (defend_mode == "both")
        cfg.defense.mode = wflab::DefendMode::TrainAndTest;
      else if (defend_mode == "test-only")
        cfg.defense.mode = wflab::DefendMode::TestOnly;
      else
        throw wflab::ConfigError("unknown defend mode " + defend_mode);
    }
    if (!experiment_kind.empty()) cfg.experiment.kind = experiment_kind;
    if (!sizes_list.empty()) cfg.experiment.sizes = wflab::detail::parse_int_list(sizes_list);
    if (!counts_list.empty()) cfg.experiment.counts = wflab::detail::parse_int_list(counts_list);
    if (target_env >= 0) cfg.experiment.target_env = target_env;

    if (c_synth->parsed()) return run_synth(cfg, write_csv);
    if (c_ingest->parsed()) return run_ingest(cfg, inputs);
    if (c_train->parsed()) return run_train(cfg, data, val_path, test_path);
    if (c_adapt->parsed()) return run_adapt(cfg, data, val_path, target_path);
    if (c_finetune->parsed()) return run_finetune(cfg, model_path, data, val_path, freeze,
                                                  reinit_head);
    if (c_defend->parsed()) return run_defend(cfg, in_dir);
    if (c_eval->parsed()) return run_eval(cfg, model_path, data);
    if (c_report->parsed()) return run_report(cfg, results_path);
    throw wflab::ConfigError("no subcommand");
  } catch (const wflab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const wflab::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const wflab::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
