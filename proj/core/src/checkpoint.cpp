#include "dastack/checkpoint.hpp"

#include <string>

#include "json.hpp"

#include "dastack/errors.hpp"
#include "dastack/io.hpp"

namespace dastack {

namespace {

using json = nlohmann::json;

json mlp_to_json(const Mlp& net) {
  json layers = json::array();
  for (const Dense& d : net.layers) {
    json l;
    l["in"] = d.weights.rows();
    l["out"] = d.weights.cols();
    l["activation"] = d.activation == Activation::Relu ? "relu" : "none";
    l["weights"] = std::vector<double>(d.weights.values().begin(), d.weights.values().end());
    l["bias"] = d.bias;
    layers.push_back(std::move(l));
  }
  return json{{"layers", std::move(layers)}};
}

Mlp mlp_from_json(const json& j) {
  Mlp net;
  for (const json& l : j.at("layers")) {
    Dense d;
    const auto rows = l.at("in").get<std::size_t>();
    const auto cols = l.at("out").get<std::size_t>();
    const auto flat = l.at("weights").get<std::vector<double>>();
    if (flat.size() != rows * cols)
      throw ParseError("checkpoint: layer weight count does not match in*out");
    d.weights = Matrix(rows, cols, flat);
    d.bias = l.at("bias").get<std::vector<double>>();
    const std::string act = l.at("activation").get<std::string>();
    if (act == "relu")
      d.activation = Activation::Relu;
    else if (act == "none")
      d.activation = Activation::None;
    else
      throw ParseError("checkpoint: unknown activation '" + act + "'");
    net.layers.push_back(std::move(d));
  }
  validate(net);
  return net;
}

json method_to_json(const DiscrepancyMethod& m) {
  json j;
  j["tag"] = method_name(m.tag);
  j["bandwidth_scales"] = m.bandwidth_scales;
  j["alm"] = {{"lambda_e", m.alm.lambda_e}, {"mu0", m.alm.mu0},       {"rho", m.alm.rho},
              {"mu_max", m.alm.mu_max},     {"tol", m.alm.tol},       {"max_iters", m.alm.max_iters}};
  return j;
}

DiscrepancyMethod method_from_json(const json& j) {
  DiscrepancyMethod m;
  const std::string tag = j.at("tag").get<std::string>();
  const auto parsed = parse_method_tag(tag);
  if (!parsed) throw ParseError("checkpoint: unknown method '" + tag + "'");
  m.tag = *parsed;
  m.bandwidth_scales = j.at("bandwidth_scales").get<std::vector<double>>();
  const json& a = j.at("alm");
  m.alm.lambda_e = a.at("lambda_e").get<double>();
  m.alm.mu0 = a.at("mu0").get<double>();
  m.alm.rho = a.at("rho").get<double>();
  m.alm.mu_max = a.at("mu_max").get<double>();
  m.alm.tol = a.at("tol").get<double>();
  m.alm.max_iters = a.at("max_iters").get<std::size_t>();
  validate(m);
  return m;
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["lambda_tradeoff"] = t.lambda_tradeoff;
  j["warmup_epochs"] = t.warmup_epochs;
  j["pseudo_refresh"] = t.pseudo_refresh;
  j["sgd"] = {{"eta0", t.sgd.eta0},           {"alpha", t.sgd.alpha},
              {"beta", t.sgd.beta},           {"momentum", t.sgd.momentum},
              {"batch_size", t.sgd.batch_size}, {"epochs", t.sgd.epochs},
              {"seed", t.sgd.seed}};
  return j;
}

json base_to_json(const BaseLearner& learner) {
  json j;
  j["n_classes"] = learner.n_classes;
  j["method"] = method_to_json(learner.method);
  j["shared"] = mlp_to_json(learner.shared);
  json subs = json::array();
  for (const Mlp& s : learner.substructures) subs.push_back(mlp_to_json(s));
  j["substructures"] = std::move(subs);
  j["classifier"] = mlp_to_json(learner.classifier);
  return j;
}

BaseLearner base_from_json(const json& j) {
  BaseLearner learner;
  learner.n_classes = j.at("n_classes").get<std::size_t>();
  learner.method = method_from_json(j.at("method"));
  learner.shared = mlp_from_json(j.at("shared"));
  for (const json& s : j.at("substructures")) learner.substructures.push_back(mlp_from_json(s));
  learner.classifier = mlp_from_json(j.at("classifier"));
  validate(learner);
  return learner;
}

json parse_checkpoint(const std::filesystem::path& path, const char* expected_kind) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  int version = -1;
  try {
    version = j.at("format_version").get<int>();
  } catch (const json::exception&) {
    throw ParseError(path.string() + ": missing format_version");
  }
  if (version != kCheckpointFormatVersion)
    throw ConfigError(path.string() + ": format_version " + std::to_string(version) +
                      " not supported (expected " + std::to_string(kCheckpointFormatVersion) +
                      ")");
  if (expected_kind != nullptr) {
    const std::string kind = j.value("kind", "");
    if (kind != expected_kind)
      throw ConfigError(path.string() + ": kind '" + kind + "' (expected '" + expected_kind +
                        "')");
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  atomic_write(path, j.dump(2) + "\n");
}

}  // namespace

void save_base_checkpoint(const std::filesystem::path& path, const BaseLearner& learner,
                          std::uint64_t seed, const TrainConfig& train) {
  validate(learner);
  json j = base_to_json(learner);
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = "base";
  j["seed"] = seed;
  j["train"] = train_to_json(train);
  write_json(path, j);
}

BaseLearner load_base_checkpoint(const std::filesystem::path& path) {
  const json j = parse_checkpoint(path, "base");
  try {
    return base_from_json(j);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_stacked_checkpoint(const std::filesystem::path& path, const StackedModel& model,
                             std::uint64_t seed) {
  validate(model);
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = "stacked";
  j["seed"] = seed;
  j["n_classes"] = model.n_classes;
  json bases = json::array();
  for (const BaseLearner& b : model.bases) bases.push_back(base_to_json(b));
  j["bases"] = std::move(bases);
  j["meta"] = mlp_to_json(model.meta);
  write_json(path, j);
}

StackedModel load_stacked_checkpoint(const std::filesystem::path& path) {
  const json j = parse_checkpoint(path, "stacked");
  try {
    StackedModel model;
    model.n_classes = j.at("n_classes").get<std::size_t>();
    for (const json& b : j.at("bases")) model.bases.push_back(base_from_json(b));
    model.meta = mlp_from_json(j.at("meta"));
    validate(model);
    return model;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::variant<BaseLearner, StackedModel> load_checkpoint(const std::filesystem::path& path) {
  const json j = parse_checkpoint(path, nullptr);
  const std::string kind = j.value("kind", "");
  if (kind == "base") return load_base_checkpoint(path);
  if (kind == "stacked") return load_stacked_checkpoint(path);
  throw ConfigError(path.string() + ": unknown checkpoint kind '" + kind + "'");
}

std::uint64_t checkpoint_seed(const std::filesystem::path& path) {
  const json j = parse_checkpoint(path, nullptr);
  try {
    return j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace dastack
