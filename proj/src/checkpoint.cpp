#include <fstream>

#include <json.hpp>

#include "advtext/classifier.hpp"
#include "advtext/errors.hpp"

namespace advtext {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "advtext-checkpoint";
constexpr int kVersion = 1;

json config_to_json(const ClassifierConfig& c) {
  json j{{"architecture", to_string(c.architecture)},
         {"dropout_prob", c.dropout_prob},
         {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"early_stop_patience", c.early_stop_patience},
         {"seed", c.seed}};
  if (c.architecture == Architecture::kCnn) {
    j["filter_widths"] = c.filter_widths;
    j["filters_per_width"] = c.filters_per_width;
  } else {
    j["hidden_size"] = c.hidden_size;
    j["num_layers"] = c.num_layers;
    if (c.architecture == Architecture::kBiLstmAttention) j["attention_size"] = c.attention_size;
  }
  return j;
}

ClassifierConfig config_from_json(const json& j) {
  ClassifierConfig c;
  c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.dropout_prob = j.at("dropout_prob").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (c.architecture == Architecture::kCnn) {
    c.filter_widths = j.at("filter_widths").get<std::vector<std::size_t>>();
    c.filters_per_width = j.at("filters_per_width").get<std::size_t>();
  } else {
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    if (c.architecture == Architecture::kBiLstmAttention) c.attention_size = j.at("attention_size").get<std::size_t>();
  }
  return c;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const Classifier& model, const std::filesystem::path& path, const std::string& table_path_hint) {
  json params = json::array();
  for (const Parameter& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"data", p.value.values()}});
  }
  const json j{{"format", kFormat},
               {"version", kVersion},
               {"config", config_to_json(model.config())},
               {"embedding", {{"fingerprint", model.embeddings().fingerprint()},
                              {"dimension", model.embeddings().dimension()},
                              {"size", model.embeddings().size()},
                              {"path", table_path_hint}}},
               {"trained", model.trained()},
               {"dev_accuracy", model.dev_accuracy()},
               {"dev_trace", model.dev_trace()},
               {"parameters", params}};
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Classifier load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const EmbeddingTable> table) {
  const json j = read_json(path);
  try {
    if (j.at("format") != kFormat || j.at("version") != kVersion) {
      throw FormatError(path.string() + " is not a version-1 advtext checkpoint");
    }
    const std::string expected = j.at("embedding").at("fingerprint").get<std::string>();
    if (!table || table->fingerprint() != expected) {
      throw FormatError("embedding table does not match checkpoint fingerprint " + expected);
    }
    Classifier model(config_from_json(j.at("config")), std::move(table));
    const json& params = j.at("parameters");
    if (params.size() != model.parameters().size()) throw FormatError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = model.parameters()[i];
      if (params[i].at("name").get<std::string>() != p.name) {
        throw FormatError("checkpoint parameter '" + params[i].at("name").get<std::string>() +
                          "' where '" + p.name + "' was expected");
      }
      Tensor value(params[i].at("shape").get<Shape>(), params[i].at("data").get<std::vector<double>>());
      if (value.shape() != p.value.shape()) throw FormatError("shape mismatch for parameter " + p.name);
      p.value = std::move(value);
    }
    model.set_training_state(j.at("trained").get<bool>(), j.at("dev_accuracy").get<double>(),
                             j.at("dev_trace").get<std::vector<double>>());
    return model;
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

std::string checkpoint_table_hint(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.contains("embedding") || !j["embedding"].contains("path")) return "";
  return j["embedding"]["path"].get<std::string>();
}

}  // namespace advtext
