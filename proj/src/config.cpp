#include "dpfed/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "dpfed/datasets.hpp"

namespace dpfed {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"federation",
       {"clients", "pool", "local_iterations", "total_iterations", "seed", "repeats", "threads",
        "theta0"}},
      {"schedule", {"kind", "eta", "mu", "lambda", "g_bound", "gamma_noniid"}},
      {"dp",
       {"mechanism", "epsilon", "delta", "c2", "xi1", "xi2", "strict_sensitivity", "clip_threshold",
        "clip_norm", "variance_mode"}},
      {"data",
       {"source", "samples_per_client", "features", "heterogeneity", "noise_std", "seed", "path",
        "target_column", "feature_columns", "sort_column", "partition", "train_fraction",
        "split_seed", "bias"}},
      {"output", {"dir", "rounds_file", "summary_file", "sweep_file", "plan_file"}},
      {"sweep", {"axis", "values"}},
  };
  return keys;
}

[[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) {
  throw ConfigError(fmt::format("[{}] {}: {}", section, key, msg));
}

std::string trimmed(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trimmed(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& text, bool* ok) {
  const std::string s = trimmed(text);
  if (s == "inf" || s == "infinity" || s == "+inf") {
    *ok = true;
    return std::numeric_limits<double>::infinity();
  }
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  *ok = !s.empty() && ec == std::errc() && ptr == end && !std::isnan(v);
  return v;
}

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    auto v = tree_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return trimmed(*v);
  }

  void real(const std::string& key, double& out) const {
    if (auto v = raw(key)) out = to_real(key, *v);
  }
  void real(const std::string& key, std::optional<double>& out) const {
    if (auto v = raw(key)) out = to_real(key, *v);
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) const {
    if (auto v = raw(key)) {
      Int parsed{};
      const auto* end = v->data() + v->size();
      const auto [ptr, ec] = std::from_chars(v->data(), end, parsed);
      if (v->empty() || ec != std::errc() || ptr != end) {
        fail(name_, key, fmt::format("expected an integer, got '{}'", *v));
      }
      out = parsed;
    }
  }

  void text(const std::string& key, std::string& out) const {
    if (auto v = raw(key)) out = *v;
  }

  void boolean(const std::string& key, bool& out) const {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        out = false;
      } else {
        fail(name_, key, fmt::format("expected true or false, got '{}'", *v));
      }
    }
  }

  template <typename Enum, typename Parser>
  void choice(const std::string& key, Enum& out, Parser parse) const {
    if (auto v = raw(key)) {
      try {
        out = parse(*v);
      } catch (const ConfigError& e) {
        fail(name_, key, e.what());
      }
    }
  }

  double to_real(const std::string& key, const std::string& v) const {
    bool ok = false;
    const double d = parse_real(v, &ok);
    if (!ok) fail(name_, key, fmt::format("expected a number, got '{}'", v));
    return d;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  const pt::ptree* tree_;
};

std::string fmt_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

SweepAxis parse_axis(const std::string& text) {
  if (text == "T") return SweepAxis::T;
  if (text == "E") return SweepAxis::E;
  if (text == "epsilon") return SweepAxis::Epsilon;
  if (text == "E_rule") return SweepAxis::ERule;
  throw ConfigError(fmt::format("unknown axis '{}' (expected T, E, epsilon or E_rule)", text));
}

}  // namespace

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::T: return "T";
    case SweepAxis::E: return "E";
    case SweepAxis::Epsilon: return "epsilon";
    case SweepAxis::ERule: return "E_rule";
  }
  return "?";
}

ExperimentConfig parse_config(std::istream& in, bool allow_sweep) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error at line {}: {}", e.line(), e.message()));
  }

  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (body.empty() || it == known.end()) {
      throw ConfigError(fmt::format("unknown section or top-level key '{}'", section));
    }
    if (section == "sweep" && !allow_sweep) {
      throw ConfigError("[sweep] is only allowed in sweep files");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) {
        throw ConfigError(fmt::format("[{}] {}: unknown key", section, key));
      }
    }
  }
  auto section = [&](const std::string& name) {
    return Section(name, tree.get_child_optional(name).get_ptr());
  };

  ExperimentConfig c;
  {
    const Section s = section("federation");
    auto& f = c.federation;
    s.integer("clients", f.clients);
    s.integer("pool", f.pool);
    s.integer("local_iterations", f.local_iterations);
    s.integer("total_iterations", f.total_iterations);
    s.integer("seed", f.seed);
    s.integer("repeats", f.repeats);
    s.integer("threads", f.threads);
    if (auto v = s.raw("theta0")) {
      for (const auto& item : split_list(*v)) f.theta0.push_back(s.to_real("theta0", item));
    }
    if (f.clients < 1) fail("federation", "clients", "must be at least 1");
    if (f.pool < 1) fail("federation", "pool", "must be at least 1");
    if (f.local_iterations < 1) fail("federation", "local_iterations", "must be at least 1");
    if (f.total_iterations < 1) fail("federation", "total_iterations", "must be at least 1");
    if (f.repeats < 1) fail("federation", "repeats", "must be at least 1");
    if (f.threads < 1) fail("federation", "threads", "must be at least 1");
  }
  {
    const Section s = section("schedule");
    auto& sc = c.schedule;
    s.choice("kind", sc.kind, parse_schedule_kind);
    s.real("eta", sc.eta);
    s.real("mu", sc.mu);
    s.real("lambda", sc.lambda);
    s.real("g_bound", sc.g_bound);
    s.real("gamma_noniid", sc.gamma_noniid);
  }
  {
    const Section s = section("dp");
    auto& d = c.dp;
    s.choice("mechanism", d.mechanism, parse_mechanism_kind);
    s.real("epsilon", d.epsilon);
    s.real("delta", d.delta);
    s.real("c2", d.c2);
    s.real("xi1", d.xi1);
    s.real("xi2", d.xi2);
    s.boolean("strict_sensitivity", d.strict_sensitivity);
    s.real("clip_threshold", d.clip_threshold);
    s.choice("clip_norm", d.clip_norm, parse_norm_kind);
    s.choice("variance_mode", d.variance_mode, parse_variance_mode);
    if (d.mechanism != MechanismKind::None && !s.raw("epsilon")) {
      fail("dp", "epsilon", "required when a mechanism is selected");
    }
    if (!(d.clip_threshold > 0.0)) fail("dp", "clip_threshold", "must be positive");
  }
  {
    const Section s = section("data");
    auto& d = c.data;
    s.choice("source", d.source, [](const std::string& v) {
      if (v == "synthetic") return DataSource::Synthetic;
      if (v == "csv") return DataSource::Csv;
      throw ConfigError(fmt::format("unknown source '{}' (expected synthetic or csv)", v));
    });
    s.integer("samples_per_client", d.samples_per_client);
    s.integer("features", d.features);
    s.real("heterogeneity", d.heterogeneity);
    s.real("noise_std", d.noise_std);
    s.integer("seed", d.seed);
    s.text("path", d.path);
    s.text("target_column", d.target_column);
    if (auto v = s.raw("feature_columns")) d.feature_columns = split_list(*v);
    s.text("sort_column", d.sort_column);
    s.choice("partition", d.partition, [](const std::string& v) {
      if (v == "sorted") return PartitionKind::Sorted;
      if (v == "random") return PartitionKind::Random;
      throw ConfigError(fmt::format("unknown partition '{}' (expected sorted or random)", v));
    });
    s.real("train_fraction", d.train_fraction);
    s.integer("split_seed", d.split_seed);
    s.boolean("bias", d.bias);
    if (d.source == DataSource::Csv) {
      if (d.path.empty()) fail("data", "path", "required for csv data");
      if (d.target_column.empty()) fail("data", "target_column", "required for csv data");
    }
  }
  {
    const Section s = section("output");
    auto& o = c.output;
    s.text("dir", o.dir);
    s.text("rounds_file", o.rounds_file);
    s.text("summary_file", o.summary_file);
    s.text("sweep_file", o.sweep_file);
    s.text("plan_file", o.plan_file);
  }
  if (tree.get_child_optional("sweep")) {
    const Section s = section("sweep");
    SweepSection sw;
    s.choice("axis", sw.axis, parse_axis);
    if (auto v = s.raw("values")) sw.values = split_list(*v);
    if (sw.values.empty()) fail("sweep", "values", "must list at least one grid point");
    c.sweep = std::move(sw);
  } else if (allow_sweep) {
    throw ConfigError("sweep file needs a [sweep] section");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, bool allow_sweep) {
  std::ifstream in(path);
  if (!in) {
    throw IoError(fmt::format("cannot open config '{}'", path.string()));
  }
  return parse_config(in, allow_sweep);
}

std::string render_config(const ExperimentConfig& c) {
  std::string out;
  auto line = [&](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  auto opt = [&](const std::string& key, const std::optional<double>& v) {
    if (v) line(key, fmt_real(*v));
  };

  const auto& f = c.federation;
  out += "[federation]\n";
  line("clients", std::to_string(f.clients));
  line("pool", std::to_string(f.pool));
  line("local_iterations", std::to_string(f.local_iterations));
  line("total_iterations", std::to_string(f.total_iterations));
  line("seed", std::to_string(f.seed));
  line("repeats", std::to_string(f.repeats));
  line("threads", std::to_string(f.threads));
  if (!f.theta0.empty()) {
    std::vector<std::string> items;
    for (double v : f.theta0) items.push_back(fmt_real(v));
    line("theta0", join(items));
  }

  const auto& s = c.schedule;
  out += "\n[schedule]\n";
  line("kind", to_string(s.kind));
  line("eta", fmt_real(s.eta));
  opt("mu", s.mu);
  opt("lambda", s.lambda);
  opt("g_bound", s.g_bound);
  opt("gamma_noniid", s.gamma_noniid);

  const auto& d = c.dp;
  out += "\n[dp]\n";
  line("mechanism", to_string(d.mechanism));
  line("epsilon", fmt_real(d.epsilon));
  line("delta", fmt_real(d.delta));
  line("c2", fmt_real(d.c2));
  opt("xi1", d.xi1);
  opt("xi2", d.xi2);
  line("strict_sensitivity", d.strict_sensitivity ? "true" : "false");
  line("clip_threshold", fmt_real(d.clip_threshold));
  line("clip_norm", to_string(d.clip_norm));
  line("variance_mode", to_string(d.variance_mode));

  const auto& a = c.data;
  out += "\n[data]\n";
  line("source", a.source == DataSource::Synthetic ? "synthetic" : "csv");
  line("samples_per_client", std::to_string(a.samples_per_client));
  line("features", std::to_string(a.features));
  line("heterogeneity", fmt_real(a.heterogeneity));
  line("noise_std", fmt_real(a.noise_std));
  line("seed", std::to_string(a.seed));
  if (!a.path.empty()) line("path", a.path);
  if (!a.target_column.empty()) line("target_column", a.target_column);
  if (!a.feature_columns.empty()) line("feature_columns", join(a.feature_columns));
  if (!a.sort_column.empty()) line("sort_column", a.sort_column);
  line("partition", a.partition == PartitionKind::Sorted ? "sorted" : "random");
  line("train_fraction", fmt_real(a.train_fraction));
  line("split_seed", std::to_string(a.split_seed));
  line("bias", a.bias ? "true" : "false");

  const auto& o = c.output;
  out += "\n[output]\n";
  line("dir", o.dir);
  line("rounds_file", o.rounds_file);
  line("summary_file", o.summary_file);
  line("sweep_file", o.sweep_file);
  line("plan_file", o.plan_file);

  if (c.sweep) {
    out += "\n[sweep]\n";
    line("axis", to_string(c.sweep->axis));
    line("values", join(c.sweep->values));
  }
  return out;
}

}  // namespace dpfed
