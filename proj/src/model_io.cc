#include "mdbt/model_io.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "mdbt/error.h"
#include "mdbt/ontology.h"

namespace mdbt {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

using json = nlohmann::json;

namespace {

struct Container {
  json header;
  std::vector<double> payload;
};

void write_container(const std::filesystem::path& path, json header, const std::vector<std::span<const double>>& arrays) {
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(path.string() + ": cannot open for writing");
  out.write(kModelMagic, sizeof kModelMagic);
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : arrays) {
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size_bytes()));
  }
  if (!out) throw ValidationError(path.string() + ": write failed");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open model file");
  char magic[sizeof kModelMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0) {
    throw ValidationError(path.string() + ": not a model file (bad magic)");
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (uint64_t{1} << 32)) throw ValidationError(path.string() + ": corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError(path.string() + ": truncated header");
  Container c;
  try {
    c.header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": header parse error at byte " + std::to_string(16 + e.byte));
  }
  std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(double) != 0) throw ValidationError(path.string() + ": payload is not a whole number of doubles");
  c.payload.resize(rest.size() / sizeof(double));
  std::memcpy(c.payload.data(), rest.data(), rest.size());
  return c;
}

json dims_to_json(const ModelDims& d) {
  return {{"lexical", d.lexical}, {"delex", d.delex}, {"hidden", d.hidden}, {"memory", d.memory}};
}

ModelDims dims_from_json(const json& j) {
  return {j.at("lexical").get<size_t>(), j.at("delex").get<size_t>(), j.at("hidden").get<size_t>(),
          j.at("memory").get<size_t>()};
}

void describe_arrays(const std::string& prefix, const SlotParams& p, json& arrays,
                     std::vector<std::span<const double>>& spans) {
  p.for_each_array([&](const char* name, std::span<const double> data) {
    arrays.push_back({{"name", prefix + name}, {"count", data.size()}});
    spans.push_back(data);
  });
}

// Reads arrays in header order into params named with `prefix`.
class PayloadReader {
 public:
  PayloadReader(const json& arrays, const std::vector<double>& payload, std::string where)
      : arrays_(arrays), payload_(payload), where_(std::move(where)) {}

  SlotParams read(const std::string& prefix, const ModelDims& dims) {
    SlotParams p(dims);
    p.for_each_array([&](const char* name, std::span<double> data) {
      if (next_ >= arrays_.size()) throw ValidationError(where_ + ": missing array " + prefix + name);
      const json& a = arrays_[next_++];
      if (a.at("name").get<std::string>() != prefix + name || a.at("count").get<size_t>() != data.size()) {
        throw ValidationError(where_ + ": array " + prefix + name + " has unexpected name or length");
      }
      if (offset_ + data.size() > payload_.size()) throw ValidationError(where_ + ": truncated payload");
      std::copy_n(payload_.begin() + static_cast<std::ptrdiff_t>(offset_), data.size(), data.begin());
      offset_ += data.size();
    });
    return p;
  }

  void finish() const {
    if (next_ != arrays_.size() || offset_ != payload_.size()) throw ValidationError(where_ + ": trailing data");
  }

 private:
  const json& arrays_;
  const std::vector<double>& payload_;
  std::string where_;
  size_t next_ = 0;
  size_t offset_ = 0;
};

std::shared_ptr<const FeatureVocabulary> read_vocab(const json& header, const std::string& where) {
  auto vocab = std::make_shared<const FeatureVocabulary>(FeatureVocabulary::parse_dump(header.at("vocab").get<std::string>()));
  if (vocab->hash() != header.at("vocab_hash").get<std::string>()) {
    throw ValidationError(where + ": vocabulary hash mismatch");
  }
  return vocab;
}

void check_dims(const ModelDims& dims, const FeatureVocabulary& vocab, const std::string& where) {
  if (dims.lexical != vocab.lexical_size() || dims.delex != vocab.delex_size()) {
    throw ValidationError(where + ": parameter dims do not match the vocabulary");
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json manifest_json(const TrainingManifest& m) {
  json j = m.to_json();
  j["best_dev_loss"] = number_or_null(m.best_dev_loss);
  for (size_t i = 0; i < m.epochs.size(); ++i) {
    j["epochs"][i]["train_loss"] = number_or_null(m.epochs[i].train_loss);
    j["epochs"][i]["dev_loss"] = number_or_null(m.epochs[i].dev_loss);
  }
  return j;
}

template <typename F>
auto guarded(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed model header: " + e.what());
  }
}

}  // namespace

TrainingManifest manifest_from_json(const json& j) {
  TrainingManifest m;
  m.phase = j.at("phase").get<std::string>();
  m.domains = j.at("domains").get<std::vector<std::string>>();
  m.seed = j.at("seed").get<uint64_t>();
  m.lr = j.at("lr").get<double>();
  m.max_epochs = j.at("max_epochs").get<int>();
  m.best_epoch = j.at("best_epoch").get<int>();
  m.best_dev_loss = number_from(j.at("best_dev_loss"));
  m.train_examples = j.at("train_examples").get<size_t>();
  m.dev_examples = j.at("dev_examples").get<size_t>();
  for (const auto& e : j.at("epochs")) {
    m.epochs.push_back({e.at("epoch").get<int>(), number_from(e.at("train_loss")), number_from(e.at("dev_loss"))});
  }
  return m;
}

void save_shared(const SharedModel& model, const std::filesystem::path& path) {
  if (!model.vocab) throw ValidationError("save_shared: model has no vocabulary");
  json arrays = json::array();
  std::vector<std::span<const double>> spans;
  describe_arrays("", model.params, arrays, spans);
  json header = {{"kind", "shared"},
                 {"dims", dims_to_json(model.params.dims)},
                 {"vocab_hash", model.vocab->hash()},
                 {"vocab", model.vocab->dump()},
                 {"fingerprint", model.params.fingerprint()},
                 {"manifest", manifest_json(model.manifest)},
                 {"arrays", arrays}};
  write_container(path, std::move(header), spans);
}

SharedModel load_shared(const std::filesystem::path& path) {
  Container c = read_container(path);
  return guarded(path, [&] {
    const std::string where = path.string();
    if (c.header.at("kind").get<std::string>() != "shared") throw ValidationError(where + ": not a shared model");
    SharedModel m;
    m.vocab = read_vocab(c.header, where);
    const ModelDims dims = dims_from_json(c.header.at("dims"));
    check_dims(dims, *m.vocab, where);
    PayloadReader reader(c.header.at("arrays"), c.payload, where);
    m.params = reader.read("", dims);
    reader.finish();
    m.manifest = manifest_from_json(c.header.at("manifest"));
    return m;
  });
}

void save_specialized(const SpecializedModel& model, const std::filesystem::path& path) {
  if (!model.vocab) throw ValidationError("save_specialized: model has no vocabulary");
  json arrays = json::array();
  std::vector<std::span<const double>> spans;
  describe_arrays("shared/", model.shared, arrays, spans);
  json slots = json::array();
  for (const auto& [key, params] : model.slots) {
    if (!(params.dims == model.shared.dims)) throw ValidationError("save_specialized: " + key.str() + " has other dims");
    slots.push_back({{"domain", key.domain}, {"slot", key.slot}});
    describe_arrays(key.str() + "/", params, arrays, spans);
  }
  json manifests = json::array();
  for (const auto& m : model.manifests) manifests.push_back(manifest_json(m));
  json header = {{"kind", "specialized"},
                 {"dims", dims_to_json(model.shared.dims)},
                 {"vocab_hash", model.vocab->hash()},
                 {"vocab", model.vocab->dump()},
                 {"provenance", model.provenance},
                 {"slots", slots},
                 {"manifests", manifests},
                 {"arrays", arrays}};
  write_container(path, std::move(header), spans);
}

SpecializedModel load_specialized(const std::filesystem::path& path) {
  Container c = read_container(path);
  return guarded(path, [&] {
    const std::string where = path.string();
    if (c.header.at("kind").get<std::string>() != "specialized") {
      throw ValidationError(where + ": not a specialised model");
    }
    SpecializedModel m;
    m.vocab = read_vocab(c.header, where);
    const ModelDims dims = dims_from_json(c.header.at("dims"));
    check_dims(dims, *m.vocab, where);
    PayloadReader reader(c.header.at("arrays"), c.payload, where);
    m.shared = reader.read("shared/", dims);
    for (const auto& s : c.header.at("slots")) {
      SlotKey key{s.at("domain").get<std::string>(), s.at("slot").get<std::string>()};
      SlotParams p = reader.read(key.str() + "/", dims);
      if (!m.slots.emplace(key, std::move(p)).second) throw ValidationError(where + ": duplicate slot " + key.str());
    }
    reader.finish();
    m.provenance = c.header.at("provenance").get<std::string>();
    for (const auto& j : c.header.at("manifests")) m.manifests.push_back(manifest_from_json(j));
    return m;
  });
}

void save_ensemble(const EnsembleModel& model, const std::filesystem::path& dir) {
  if (model.members.empty()) throw ValidationError("save_ensemble: empty ensemble");
  std::filesystem::create_directories(dir);
  json files = json::array();
  for (size_t i = 0; i < model.members.size(); ++i) {
    const std::string name = "member_" + std::to_string(i) + ".model";
    save_specialized(model.members[i], dir / name);
    files.push_back(name);
  }
  json index = {{"combination", model.combination}, {"vocab_hash", model.vocab().hash()}, {"members", files}};
  write_text_file(dir / "ensemble.json", index.dump(2) + "\n");
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  const json index = read_json_file(dir / "ensemble.json");
  return guarded(dir, [&] {
    EnsembleModel e;
    e.combination = index.at("combination").get<std::string>();
    if (e.combination != "mean") throw ValidationError(dir.string() + ": unknown combination '" + e.combination + "'");
    const std::string hash = index.at("vocab_hash").get<std::string>();
    for (const auto& name : index.at("members")) {
      SpecializedModel m = load_specialized(dir / name.get<std::string>());
      if (m.vocab->hash() != hash) throw ValidationError(dir.string() + ": member vocabulary mismatch");
      if (!e.members.empty()) m.vocab = e.members.front().vocab;
      e.members.push_back(std::move(m));
    }
    if (e.members.empty()) throw ValidationError(dir.string() + ": ensemble has no members");
    return e;
  });
}

EnsembleModel load_any_model(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_ensemble(path);
  const Container c = read_container(path);
  const std::string kind = guarded(path, [&] { return c.header.at("kind").get<std::string>(); });
  if (kind == "shared") return as_ensemble(as_specialized(load_shared(path)));
  return as_ensemble(load_specialized(path));
}

}  // namespace mdbt
