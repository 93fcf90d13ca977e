#include "mdbt/cli.h"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "mdbt/error.h"
#include "mdbt/hash.h"
#include "mdbt/model_io.h"
#include "mdbt/rng.h"
#include "mdbt/synthetic.h"

namespace mdbt {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path ontology_path(const fs::path& dir, const std::string& domain) { return dir / (domain + ".ontology.json"); }

fs::path split_path(const fs::path& dir, const std::string& domain, const std::string& split) {
  return dir / (domain + "." + split + ".json");
}

DomainSplit load_domain(const fs::path& dir, const std::string& domain) {
  const Ontology ontology = load_ontology(ontology_path(dir, domain));
  if (ontology.domain_name != domain) {
    throw ValidationError(ontology_path(dir, domain).string() + ": domain is '" + ontology.domain_name +
                          "', expected '" + domain + "'");
  }
  return {load_corpus(split_path(dir, domain, "train"), ontology), load_corpus(split_path(dir, domain, "dev"), ontology),
          load_corpus(split_path(dir, domain, "test"), ontology)};
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<size_t>(in.gcount()));
  }
  return h.hex();
}

struct Options {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  bool deterministic = false;
  std::vector<std::string> domains;
  std::vector<size_t> grid;
  int ensemble = 0;
  std::string data;
  std::string new_domain;
  int repeats = 1;
  std::vector<std::string> models;
  std::vector<std::string> specs;
  size_t dialogs = 500;
  double noise = 0.0;
  std::string split = "test";
};

// Collects what a run read and wrote, then emits manifest.json beside the
// outputs. Wall-clock times appear nowhere else.
class Run {
 public:
  Run(std::string command, const std::vector<std::string>& args, const Options& opt, const RunConfig& config)
      : command_(std::move(command)), args_(args), opt_(opt), config_(config), started_(utc_now()) {}

  void input(const fs::path& p) {
    if (fs::is_directory(p)) {
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file()) inputs_.push_back(entry.path());
      }
    } else {
      inputs_.push_back(p);
    }
  }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write_manifest(std::ostream& log) {
    json inputs = json::array(), outputs = json::array();
    std::sort(inputs_.begin(), inputs_.end());
    inputs_.erase(std::unique(inputs_.begin(), inputs_.end()), inputs_.end());
    for (const auto& p : inputs_) inputs.push_back({{"path", p.string()}, {"fnv1a", file_hash(p)}});
    for (const auto& p : outputs_) {
      if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(p)) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) outputs.push_back({{"path", f.string()}, {"fnv1a", file_hash(f)}});
      } else {
        outputs.push_back({{"path", p.string()}, {"fnv1a", file_hash(p)}});
      }
    }
    json m = {{"command", command_},
              {"argv", args_},
              {"config", config_to_json(config_)},
              {"seed", config_.seed},
              {"deterministic", opt_.deterministic},
              {"inputs", inputs},
              {"outputs", outputs},
              {"started_at", started_},
              {"finished_at", utc_now()}};
    for (auto& [k, v] : extra_.items()) m[k] = v;
    const fs::path path = fs::path(opt_.out) / "manifest.json";
    write_text_file(path, m.dump(2) + "\n");
    log << "wrote " << path.string() << '\n';
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  const Options& opt_;
  const RunConfig& config_;
  std::string started_;
  std::vector<fs::path> inputs_, outputs_;
  json extra_ = json::object();
};

RunConfig resolve_config(const Options& opt) {
  RunConfig c = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
  if (opt.seed_given) c.seed = opt.seed;
  if (opt.ensemble > 0) c.ensemble_k = opt.ensemble;
  c.validate();
  return c;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

struct LoadedDomains {
  std::vector<DomainSplit> splits;

  TrainingData data() const {
    TrainingData d;
    for (const auto& s : splits) {
      d.train.push_back(&s.train);
      d.dev.push_back(&s.dev);
    }
    return d;
  }
  CombinedOntology ontology() const {
    std::vector<Ontology> members;
    for (const auto& s : splits) members.push_back(s.train.ontology);
    return merge_ontologies(std::move(members), "combined");
  }
};

LoadedDomains load_domains(const Options& opt, Run& run) {
  require(!opt.data.empty(), "--data is required");
  require(!opt.domains.empty(), "--domains is required");
  LoadedDomains out;
  for (const auto& d : opt.domains) {
    out.splits.push_back(load_domain(opt.data, d));
    run.input(ontology_path(opt.data, d));
    for (const char* s : {"train", "dev", "test"}) run.input(split_path(opt.data, d, s));
  }
  return out;
}

void cmd_synth(const Options& opt, const RunConfig& config, Run& run, std::ostream& log) {
  require(!opt.specs.empty(), "synth needs at least one --spec");
  require(opt.noise >= 0.0 && opt.noise <= 1.0, "--noise must be in [0, 1]");
  for (const auto& spec_path : opt.specs) {
    const SynthDomainSpec spec = load_synth_spec(spec_path);
    run.input(spec_path);
    const std::string& domain = spec.ontology.domain_name;
    const Corpus corpus = generate_synthetic(spec, opt.dialogs, opt.noise, config.seed);
    const CorpusSplit split =
        split_corpus(corpus, config.train_fraction, config.dev_fraction, derive_seed(config.seed, "split/" + domain));
    save_ontology(spec.ontology, ontology_path(opt.out, domain));
    save_corpus(split.train, split_path(opt.out, domain, "train"));
    save_corpus(split.dev, split_path(opt.out, domain, "dev"));
    save_corpus(split.test, split_path(opt.out, domain, "test"));
    run.output(ontology_path(opt.out, domain));
    for (const char* s : {"train", "dev", "test"}) run.output(split_path(opt.out, domain, s));
    log << domain << ": " << split.train.dialogs.size() << " train, " << split.dev.dialogs.size() << " dev, "
        << split.test.dialogs.size() << " test dialogs\n";
  }
}

void write_training_log(const fs::path& path, const std::vector<TrainingManifest>& manifests, Run& run) {
  json j = json::array();
  for (const auto& m : manifests) {
    json e = m.to_json();
    for (auto& rec : e["epochs"]) {
      if (rec["train_loss"].is_number() && !std::isfinite(rec["train_loss"].get<double>())) rec["train_loss"] = nullptr;
    }
    j.push_back(e);
  }
  write_text_file(path, j.dump(2) + "\n");
  run.output(path);
}

void cmd_train_shared(const Options& opt, const RunConfig& config, Run& run, std::ostream& log) {
  const LoadedDomains domains = load_domains(opt, run);
  const TrainingData data = domains.data();
  const SharedModel model = train_shared(data, vocabulary_for(data, domains.ontology(), config), config, config.seed);
  const fs::path path = fs::path(opt.out) / "shared.model";
  save_shared(model, path);
  run.output(path);
  write_training_log(fs::path(opt.out) / "training.json", {model.manifest}, run);
  log << "shared model: best epoch " << model.manifest.best_epoch << ", dev loss " << model.manifest.best_dev_loss
      << '\n';
}

void cmd_specialize(const Options& opt, const RunConfig& config, Run& run, std::ostream& log) {
  require(opt.models.size() == 1, "specialize needs exactly one --model");
  const SharedModel shared = load_shared(opt.models[0]);
  run.input(opt.models[0]);
  const LoadedDomains domains = load_domains(opt, run);
  const SpecializedModel model = specialize_all(shared, domains.data(), config, config.seed);
  const fs::path path = fs::path(opt.out) / "specialized.model";
  save_specialized(model, path);
  run.output(path);
  write_training_log(fs::path(opt.out) / "training.json", model.manifests, run);
  log << "specialised " << model.slots.size() << " slots\n";
}

void cmd_train_ensemble(const Options& opt, const RunConfig& config, Run& run, std::ostream& log) {
  const LoadedDomains domains = load_domains(opt, run);
  const TrainingData data = domains.data();
  const EnsembleModel model =
      train_ensemble(data, data, domains.ontology(), config, config.ensemble_k, config.seed, !opt.deterministic);
  save_ensemble(model, opt.out);
  std::vector<TrainingManifest> manifests;
  for (size_t i = 0; i < model.members.size(); ++i) {
    run.output(fs::path(opt.out) / ("member_" + std::to_string(i) + ".model"));
    for (const auto& m : model.members[i].manifests) manifests.push_back(m);
  }
  run.output(fs::path(opt.out) / "ensemble.json");
  write_training_log(fs::path(opt.out) / "training.json", manifests, run);
  log << "trained " << model.members.size() << " ensemble members\n";
}

void cmd_eval(const Options& opt, const RunConfig&, Run& run, std::ostream& log) {
  require(!opt.models.empty(), "eval needs --model");
  require(!opt.data.empty(), "--data is required");
  require(!opt.domains.empty(), "--domains is required");
  require(opt.models.size() == 1 || opt.models.size() == opt.domains.size(),
          "eval needs one --model, or one per domain in --domains order");
  require(opt.split == "train" || opt.split == "dev" || opt.split == "test", "--split must be train, dev or test");
  std::vector<EnsembleModel> models;
  for (const auto& m : opt.models) {
    models.push_back(load_any_model(m));
    run.input(m);
  }
  EvalReport report;
  for (size_t i = 0; i < opt.domains.size(); ++i) {
    const std::string& d = opt.domains[i];
    const Ontology ontology = load_ontology(ontology_path(opt.data, d));
    const Corpus corpus = load_corpus(split_path(opt.data, d, opt.split), ontology);
    run.input(ontology_path(opt.data, d));
    run.input(split_path(opt.data, d, opt.split));
    report.domains.push_back(evaluate_domain(models[models.size() == 1 ? 0 : i], corpus));
    log << d << ": joint " << format_percent(report.domains.back().joint) << '\n';
  }
  const fs::path path = fs::path(opt.out) / "report.csv";
  write_text_file(path, report.to_csv());
  run.output(path);
  log << "geometric mean " << format_percent(report.geometric_mean_joint()) << '\n';
}

void cmd_curve(const Options& opt, const RunConfig& config, Run& run, std::ostream& log) {
  require(!opt.new_domain.empty(), "curve needs --new-domain");
  require(!opt.grid.empty(), "curve needs --grid");
  require(opt.repeats >= 1, "--repeats must be >= 1");
  require(!opt.data.empty(), "--data is required");
  const DomainSplit target = load_domain(opt.data, opt.new_domain);
  run.input(ontology_path(opt.data, opt.new_domain));
  for (const char* s : {"train", "dev", "test"}) run.input(split_path(opt.data, opt.new_domain, s));
  std::vector<DomainSplit> ood;
  for (const auto& d : opt.domains) {
    require(d != opt.new_domain, "--domains must not contain the new domain");
    ood.push_back(load_domain(opt.data, d));
    run.input(ontology_path(opt.data, d));
    for (const char* s : {"train", "dev", "test"}) run.input(split_path(opt.data, d, s));
  }
  validate_grid(opt.grid, target.train.dialogs.size());
  std::vector<uint64_t> seeds;
  for (int i = 0; i < opt.repeats; ++i) seeds.push_back(config.seed + static_cast<uint64_t>(i));
  const LearningCurve curve =
      run_learning_curve(target, ood, opt.grid, config, config.ensemble_k, seeds, !opt.deterministic);
  const fs::path out(opt.out);
  write_text_file(out / "in_domain.dat", curve.in_domain_dat());
  write_text_file(out / "ood.dat", curve.ood_dat());
  write_text_file(out / "curve.csv", curve.to_csv());
  for (const char* f : {"in_domain.dat", "ood.dat", "curve.csv"}) run.output(out / f);
  run.note("seeds", seeds);
  for (const auto& p : curve.points) {
    log << p.n_dialogs << ": in-domain " << format_percent(p.in_domain) << ", ood " << format_percent(p.ood) << '\n';
  }
}

template <typename T>
std::vector<T> split_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, std::string>) {
      out.push_back(item);
    } else {
      size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(item, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != item.size()) throw ValidationError(std::string(what) + ": '" + item + "' is not a whole number");
      out.push_back(static_cast<T>(v));
    }
  }
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-domain dialog state tracker"};
  app.require_subcommand(1);
  Options opt;
  std::string domains, grid;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option_function<uint64_t>(
        "--seed", [&](uint64_t s) { opt.seed = s, opt.seed_given = true; }, "Base seed (overrides the config)");
    sub->add_option("--out", opt.out, "Output directory")->required();
    sub->add_flag("--deterministic", opt.deterministic, "Single-threaded seeded execution");
  };
  auto with_data = [&](CLI::App* sub) {
    sub->add_option("--data", opt.data, "Directory of <domain>.ontology.json and split files")
        ->check(CLI::ExistingDirectory);
    sub->add_option("--domains", domains, "Comma-separated domain names");
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate and split synthetic corpora");
  common(synth);
  synth->add_option("--spec", opt.specs, "Synthetic domain spec (repeatable)")->check(CLI::ExistingFile);
  synth->add_option("--dialogs", opt.dialogs, "Dialogs per domain")->check(CLI::PositiveNumber);
  synth->add_option("--noise", opt.noise, "ASR confusion rate in [0,1]");

  CLI::App* shared = app.add_subcommand("train-shared", "Train one tied model over all listed domains");
  common(shared);
  with_data(shared);

  CLI::App* specialize = app.add_subcommand("specialize", "Specialise a shared model per slot");
  common(specialize);
  with_data(specialize);
  specialize->add_option("--model", opt.models, "Shared model file")->check(CLI::ExistingFile);

  CLI::App* ensemble = app.add_subcommand("train-ensemble", "Train K shared+specialised members");
  common(ensemble);
  with_data(ensemble);
  ensemble->add_option("--ensemble", opt.ensemble, "Number of members K")->check(CLI::PositiveNumber);

  CLI::App* eval = app.add_subcommand("eval", "Score models on a split and write report.csv");
  common(eval);
  with_data(eval);
  eval->add_option("--model", opt.models, "Model file or ensemble directory (repeatable)")->check(CLI::ExistingPath);
  eval->add_option("--split", opt.split, "train, dev or test");

  CLI::App* curve = app.add_subcommand("curve", "Learning curve with and without out-of-domain data");
  common(curve);
  with_data(curve);
  curve->add_option("--new-domain", opt.new_domain, "Domain whose training data is subsampled");
  curve->add_option("--grid", grid, "Comma-separated subset sizes");
  curve->add_option("--ensemble", opt.ensemble, "Members per ensemble")->check(CLI::PositiveNumber);
  curve->add_option("--repeats", opt.repeats, "Seeds to average over")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    opt.domains = split_list<std::string>(domains, "--domains");
    opt.grid = split_list<size_t>(grid, "--grid");
    const RunConfig config = resolve_config(opt);
    CLI::App* sub = app.get_subcommands().front();
    fs::create_directories(opt.out);
    Run run(sub->get_name(), args, opt, config);
    if (!opt.config_path.empty()) run.input(opt.config_path);
    if (sub == synth) cmd_synth(opt, config, run, out);
    else if (sub == shared) cmd_train_shared(opt, config, run, out);
    else if (sub == specialize) cmd_specialize(opt, config, run, out);
    else if (sub == ensemble) cmd_train_ensemble(opt, config, run, out);
    else if (sub == eval) cmd_eval(opt, config, run, out);
    else cmd_curve(opt, config, run, out);
    run.write_manifest(out);
    return 0;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mdbt
