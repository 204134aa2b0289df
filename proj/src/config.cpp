#include "pararank/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pararank/errors.hpp"

namespace pararank {
namespace {

using nlohmann::json;

void apply(PipelineConfig& cfg, const std::string& key, const json& value) {
  try {
    if (key == "n_docs") {
      cfg.n_docs = value.get<std::size_t>();
    } else if (key == "m_paragraphs") {
      cfg.m_paragraphs = value.get<std::size_t>();
    } else if (key == "alpha" || key == "weights.alpha") {
      cfg.weights.alpha = value.get<double>();
    } else if (key == "beta" || key == "weights.beta") {
      cfg.weights.beta = value.get<double>();
    } else if (key == "gamma" || key == "weights.gamma") {
      cfg.weights.gamma = value.get<double>();
    } else if (key == "max_span") {
      cfg.max_span = value.get<std::size_t>();
    } else if (key == "trace_size") {
      cfg.trace_size = value.get<std::size_t>();
    } else if (key == "corpus") {
      cfg.corpus_path = value.get<std::string>();
    } else if (key == "index") {
      cfg.index_path = value.get<std::string>();
    } else if (key == "model") {
      cfg.model_path = value.get<std::string>();
    } else if (key == "embeddings") {
      cfg.embeddings_path = value.get<std::string>();
    } else {
      throw FormatError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError("config key '" + key + "': " + e.what());
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

PipelineConfig parse_pipeline_config_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  PipelineConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "weights" && value.is_object()) {
      for (const auto& [wk, wv] : value.items()) apply(cfg, "weights." + wk, wv);
    } else {
      apply(cfg, key, value);
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig parse_pipeline_config_toml(std::string_view text) {
  PipelineConfig cfg;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    // Strip comments outside of quoted strings.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string raw = trim(std::string_view(t).substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    json value;
    try {
      value = json::parse(raw);  // numbers, booleans and basic strings share JSON syntax
    } catch (const json::exception&) {
      throw FormatError("config line " + std::to_string(line_no) + ": bad value '" + raw + "'");
    }
    apply(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  return is_json ? parse_pipeline_config_json(buf.str()) : parse_pipeline_config_toml(buf.str());
}

}  // namespace pararank
