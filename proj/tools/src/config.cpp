#include "fedchs_app/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace fedchs::app {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected a number, got '" + text + "'");
  return value;
}

int parse_int(const std::string& text, int lo) {
  const int v = parse_number<int>(text);
  if (v < lo) throw std::invalid_argument("must be >= " + std::to_string(lo));
  return v;
}

std::size_t parse_size(const std::string& text) {
  if (!text.empty() && text[0] == '-') throw std::invalid_argument("must be nonnegative");
  return parse_number<std::size_t>(text);
}

double parse_positive(const std::string& text) {
  const double v = parse_number<double>(text);
  if (!(v > 0.0)) throw std::invalid_argument("must be positive");
  return v;
}

double parse_nonnegative(const std::string& text) {
  const double v = parse_number<double>(text);
  if (!(v >= 0.0)) throw std::invalid_argument("must be nonnegative");
  return v;
}

template <typename E>
E parse_choice(const std::string& text, const std::map<std::string, E>& choices) {
  const auto it = choices.find(text);
  if (it != choices.end()) return it->second;
  std::string names;
  for (const auto& [name, value] : choices) names += (names.empty() ? "" : ", ") + name;
  throw std::invalid_argument("unknown value '" + text + "' (expected one of: " + names + ")");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](auto& c, const auto& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"algorithm", [](auto& c, const auto& v) { c.algorithm = parse_algorithm(v); }},
      {"rounds", [](auto& c, const auto& v) { c.rounds = parse_int(v, 1); }},
      {"steps", [](auto& c, const auto& v) { c.steps = parse_int(v, 1); }},
      {"schedule",
       [](auto& c, const auto& v) {
         c.schedule = parse_choice<ScheduleMode>(v, {{"sqrt", ScheduleMode::sqrt_decay},
                                                     {"power", ScheduleMode::power},
                                                     {"constant", ScheduleMode::constant}});
       }},
      {"schedule_q", [](auto& c, const auto& v) { c.schedule_q = parse_positive(v); }},
      {"schedule_q1", [](auto& c, const auto& v) { c.schedule_q1 = parse_positive(v); }},
      {"schedule_q2", [](auto& c, const auto& v) { c.schedule_q2 = parse_positive(v); }},
      {"smoothness",
       [](auto& c, const auto& v) {
         if (v == "auto") {
           c.smoothness.reset();
         } else {
           c.smoothness = parse_positive(v);
         }
       }},
      {"batch_size", [](auto& c, const auto& v) { c.batch_size = parse_size(v); }},
      {"bits_per_vector", [](auto& c, const auto& v) { c.bits_per_vector = parse_number<std::uint64_t>(v); }},
      {"quantize_levels", [](auto& c, const auto& v) { c.quantize_levels = parse_int(v, 0); }},
      {"local_steps", [](auto& c, const auto& v) { c.local_steps = parse_int(v, 1); }},
      {"dataset",
       [](auto& c, const auto& v) {
         c.data.kind = parse_choice<DatasetKind>(v, {{"gaussian_blobs", DatasetKind::gaussian_blobs},
                                                     {"linear_regression", DatasetKind::linear_regression}});
       }},
      {"samples", [](auto& c, const auto& v) { c.data.total_size = parse_size(v); }},
      {"input_dim", [](auto& c, const auto& v) { c.data.input_dim = parse_size(v); }},
      {"noise", [](auto& c, const auto& v) { c.data.noise = parse_nonnegative(v); }},
      {"separation", [](auto& c, const auto& v) { c.data.separation = parse_nonnegative(v); }},
      {"condition", [](auto& c, const auto& v) { c.data.condition = parse_positive(v); }},
      {"clients", [](auto& c, const auto& v) { c.clients = parse_size(v); }},
      {"dirichlet_lambda", [](auto& c, const auto& v) { c.dirichlet_lambda = parse_positive(v); }},
      {"clusters", [](auto& c, const auto& v) { c.clusters = parse_size(v); }},
      {"cluster_policy",
       [](auto& c, const auto& v) {
         c.cluster_policy = parse_choice<ClusterPolicy>(v, {{"contiguous", ClusterPolicy::contiguous},
                                                            {"round_robin", ClusterPolicy::round_robin},
                                                            {"iid_clusters", ClusterPolicy::iid_clusters}});
       }},
      {"model",
       [](auto& c, const auto& v) {
         c.model = parse_choice<ModelKind>(v, {{"quadratic", ModelKind::quadratic},
                                               {"logistic", ModelKind::logistic},
                                               {"mlp", ModelKind::mlp}});
       }},
      {"mu_reg", [](auto& c, const auto& v) { c.mu_reg = parse_nonnegative(v); }},
      {"hidden", [](auto& c, const auto& v) { c.hidden = parse_size(v); }},
      {"topology",
       [](auto& c, const auto& v) {
         c.topology = parse_choice<TopologyKind>(
             v, {{"random", TopologyKind::random}, {"ring", TopologyKind::ring}, {"path", TopologyKind::path}});
       }},
      {"max_degree", [](auto& c, const auto& v) { c.max_degree = parse_size(v); }},
      {"bound",
       [](auto& c, const auto& v) {
         c.bound = parse_choice<BoundSelection>(
             v, {{"thm1", BoundSelection::thm1}, {"thm2", BoundSelection::thm2}, {"both", BoundSelection::both}});
       }},
      {"probe_count", [](auto& c, const auto& v) { c.probe_count = parse_size(v); }},
      {"gamma", [](auto& c, const auto& v) { c.gamma = parse_nonnegative(v); }},
      {"out_dir", [](auto& c, const auto& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

Algorithm parse_algorithm(const std::string& name) {
  return parse_choice<Algorithm>(name, {{"fedchs", Algorithm::fedchs},
                                        {"fedavg", Algorithm::fedavg},
                                        {"hfl", Algorithm::hfl},
                                        {"sfl-rw", Algorithm::sfl_rw}});
}

const char* to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::random: return "random";
    case TopologyKind::ring: return "ring";
    case TopologyKind::path: return "path";
  }
  return "unknown";
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    if (value.empty()) throw ConfigError(where + "key '" + key + "' has no value");
    try {
      it->second(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_config(in, path);
}

}  // namespace fedchs::app
