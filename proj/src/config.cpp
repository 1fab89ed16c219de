#include "sfdqn/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "sfdqn/csv.hpp"

namespace sfdqn {

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::training: return "training";
    case ExperimentKind::init_sweep: return "init_sweep";
    case ExperimentKind::gpi_effect: return "gpi_effect";
    case ExperimentKind::transfer: return "transfer";
    case ExperimentKind::theory: return "theory";
  }
  return "?";
}

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& what) const {
    throw ConfigError(source_, n.Mark().line >= 0 ? static_cast<std::size_t>(n.Mark().line) + 1 : 0, what);
  }

  // Checks a mapping for unknown keys and hands each known key to its handler.
  void map(const YAML::Node& n, const std::string& where,
           const std::map<std::string, std::function<void(const YAML::Node&)>>& handlers) const {
    if (!n.IsMap()) fail(n, where + " must be a mapping");
    for (const auto& kv : n) {
      const std::string key = kv.first.as<std::string>();
      auto it = handlers.find(key);
      if (it == handlers.end()) {
        std::string known;
        for (const auto& h : handlers) known += (known.empty() ? "" : ", ") + h.first;
        fail(kv.first, "unknown key '" + key + "' in " + where + " (expected one of: " + known + ")");
      }
      it->second(kv.second);
    }
  }

  template <typename T>
  T scalar(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "cannot read " + what + " from '" + n.Scalar() + "'");
    }
  }

  std::size_t count(const YAML::Node& n, const std::string& what) const {
    const auto v = scalar<long long>(n, what);
    if (v < 0) fail(n, what + " must be >= 0");
    return static_cast<std::size_t>(v);
  }

  double real(const YAML::Node& n, const std::string& what) const { return scalar<double>(n, what); }
  bool flag(const YAML::Node& n, const std::string& what) const { return scalar<bool>(n, what); }
  std::string text(const YAML::Node& n, const std::string& what) const { return scalar<std::string>(n, what); }

  std::vector<double> reals(const YAML::Node& n, const std::string& what) const {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    std::vector<double> v;
    for (const auto& x : n) v.push_back(real(x, what));
    return v;
  }

  std::vector<std::size_t> counts(const YAML::Node& n, const std::string& what) const {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    std::vector<std::size_t> v;
    for (const auto& x : n) v.push_back(count(x, what));
    return v;
  }

  void env(const YAML::Node& n, MdpConfig& c) const {
    map(n, "env",
        {{"n_states", [&](const YAML::Node& x) { c.n_states = count(x, "n_states"); }},
         {"n_actions", [&](const YAML::Node& x) { c.n_actions = count(x, "n_actions"); }},
         {"d_phi", [&](const YAML::Node& x) { c.d_phi = count(x, "d_phi"); }},
         {"widths", [&](const YAML::Node& x) { c.net.widths = counts(x, "widths"); }},
         {"gamma", [&](const YAML::Node& x) { c.gamma = real(x, "gamma"); }},
         {"successors", [&](const YAML::Node& x) { c.successors = count(x, "successors"); }}});
    c.net.head_dim = c.d_phi;
  }

  void schedule(const YAML::Node& n, StepSchedule& s, const std::string& where) const {
    map(n, where,
        {{"schedule",
          [&](const YAML::Node& x) {
            const auto k = text(x, "schedule");
            if (k == "constant") s.kind = StepSchedule::Kind::constant;
            else if (k == "inverse_time") s.kind = StepSchedule::Kind::inverse_time;
            else fail(x, "schedule must be 'constant' or 'inverse_time'");
          }},
         {"base", [&](const YAML::Node& x) { s.base = real(x, "base"); }},
         {"offset", [&](const YAML::Node& x) { s.offset = real(x, "offset"); }}});
  }

  void policy(const YAML::Node& n, PolicySpec& p) const {
    map(n, "policy",
        {{"kind",
          [&](const YAML::Node& x) {
            const auto k = text(x, "kind");
            if (k == "greedy") p.kind = PolicySpec::Kind::greedy;
            else if (k == "epsilon_greedy") p.kind = PolicySpec::Kind::epsilon_greedy;
            else if (k == "softmax") p.kind = PolicySpec::Kind::softmax;
            else fail(x, "policy kind must be greedy, epsilon_greedy or softmax");
          }},
         {"epsilon_start", [&](const YAML::Node& x) { p.epsilon.start = real(x, "epsilon_start"); }},
         {"epsilon_end", [&](const YAML::Node& x) { p.epsilon.end = real(x, "epsilon_end"); }},
         {"decay_fraction", [&](const YAML::Node& x) { p.epsilon.decay_fraction = real(x, "decay_fraction"); }},
         {"temperature", [&](const YAML::Node& x) { p.temperature = real(x, "temperature"); }}});
  }

  std::optional<double> radius_or(const YAML::Node& n, const std::string& what, const std::string& word) const {
    if (n.IsScalar() && n.Scalar() == word) return std::nullopt;
    return real(n, what);
  }

  void trainer(const YAML::Node& n, TrainerConfig& c, const std::string& where) const {
    map(n, where,
        {{"iterations", [&](const YAML::Node& x) { c.iterations = count(x, "iterations"); }},
         {"batch_size", [&](const YAML::Node& x) { c.batch_size = count(x, "batch_size"); }},
         {"buffer_capacity", [&](const YAML::Node& x) { c.buffer_capacity = count(x, "buffer_capacity"); }},
         {"eta", [&](const YAML::Node& x) { schedule(x, c.eta, where + ".eta"); }},
         {"kappa",
          [&](const YAML::Node& x) {
            if (x.IsScalar() && x.Scalar() == "auto") c.kappa.reset();
            else c.kappa = real(x, "kappa");
          }},
         {"policy", [&](const YAML::Node& x) { policy(x, c.policy); }},
         {"theta_init_radius", [&](const YAML::Node& x) { c.theta_init_radius = radius_or(x, "theta_init_radius", "fresh"); }},
         {"init_scale", [&](const YAML::Node& x) { c.init_scale = real(x, "init_scale"); }},
         {"w_init_radius", [&](const YAML::Node& x) { c.w_init_radius = radius_or(x, "w_init_radius", "zero"); }},
         {"use_gpi", [&](const YAML::Node& x) { c.use_gpi = flag(x, "use_gpi"); }},
         {"target_sync", [&](const YAML::Node& x) { c.target_sync = count(x, "target_sync"); }},
         {"episode_length", [&](const YAML::Node& x) { c.episode_length = count(x, "episode_length"); }},
         {"eval_every", [&](const YAML::Node& x) { c.eval_every = count(x, "eval_every"); }}});
  }

 private:
  std::string source_;
};

std::string yaml_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

std::string trainer_yaml(const TrainerConfig& c, const std::string& indent) {
  std::ostringstream o;
  o << indent << "iterations: " << c.iterations << "\n"
    << indent << "batch_size: " << c.batch_size << "\n"
    << indent << "buffer_capacity: " << c.buffer_capacity << "\n"
    << indent << "eta: {schedule: " << (c.eta.kind == StepSchedule::Kind::constant ? "constant" : "inverse_time")
    << ", base: " << fmt(c.eta.base) << ", offset: " << fmt(c.eta.offset) << "}\n"
    << indent << "kappa: " << (c.kappa ? fmt(*c.kappa) : std::string("auto")) << "\n"
    << indent << "policy: {kind: " << to_string(c.policy.kind) << ", epsilon_start: " << fmt(c.policy.epsilon.start)
    << ", epsilon_end: " << fmt(c.policy.epsilon.end) << ", decay_fraction: " << fmt(c.policy.epsilon.decay_fraction)
    << ", temperature: " << fmt(c.policy.temperature) << "}\n"
    << indent << "theta_init_radius: " << (c.theta_init_radius ? fmt(*c.theta_init_radius) : std::string("fresh")) << "\n"
    << indent << "init_scale: " << fmt(c.init_scale) << "\n"
    << indent << "w_init_radius: " << (c.w_init_radius ? fmt(*c.w_init_radius) : std::string("zero")) << "\n"
    << indent << "use_gpi: " << (c.use_gpi ? "true" : "false") << "\n"
    << indent << "target_sync: " << c.target_sync << "\n"
    << indent << "episode_length: " << c.episode_length << "\n"
    << indent << "eval_every: " << c.eval_every << "\n";
  return o.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  trainer.validate();
  source.validate();
  dqn.validate();
  if (seeds == 0) throw ValidationError("eval.seeds must be >= 1");
  if (n_tasks == 0) throw ValidationError("tasks.n_tasks must be >= 1");
  for (double d : distances)
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("task distances must be finite and >= 0");
  if (kind == ExperimentKind::training && !distances.empty() && distances.size() != n_tasks - 1)
    throw ValidationError("training needs one distance per task after the first (n_tasks - 1)");
  if (kind == ExperimentKind::gpi_effect && distances.empty()) throw ValidationError("gpi_effect needs tasks.distances");
  if (kind == ExperimentKind::transfer && distances.size() != 1)
    throw ValidationError("transfer needs exactly one target distance in tasks.distances");
  if (kind == ExperimentKind::init_sweep) {
    if (!sweep || sweep->values.empty()) throw ValidationError("init_sweep needs a sweep block with values");
    if (sweep->field != "w_init_radius" && sweep->field != "theta_init_radius")
      throw ValidationError("sweep.field must be w_init_radius or theta_init_radius");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, static_cast<std::size_t>(e.mark.line) + 1, e.msg);
  }
  const Reader r(source);
  ExperimentConfig c;
  if (!root || root.IsNull()) throw ConfigError(source, 1, "empty config");
  // Blocks that default to the trainer block are applied after it, wherever they appear.
  std::optional<YAML::Node> source_node, dqn_node;
  r.map(root, "config",
        {{"name", [&](const YAML::Node& x) { c.name = r.text(x, "name"); }},
         {"description", [&](const YAML::Node& x) { c.description = r.text(x, "description"); }},
         {"kind",
          [&](const YAML::Node& x) {
            const auto k = r.text(x, "kind");
            if (k == "training") c.kind = ExperimentKind::training;
            else if (k == "init_sweep") c.kind = ExperimentKind::init_sweep;
            else if (k == "gpi_effect") c.kind = ExperimentKind::gpi_effect;
            else if (k == "transfer") c.kind = ExperimentKind::transfer;
            else if (k == "theory") c.kind = ExperimentKind::theory;
            else r.fail(x, "kind must be one of training, init_sweep, gpi_effect, transfer, theory");
          }},
         {"seed", [&](const YAML::Node& x) { c.seed = r.scalar<std::uint64_t>(x, "seed"); }},
         {"output", [&](const YAML::Node& x) { c.output = r.text(x, "output"); }},
         {"env", [&](const YAML::Node& x) { r.env(x, c.env); }},
         {"trainer", [&](const YAML::Node& x) { r.trainer(x, c.trainer, "trainer"); }},
         {"source", [&](const YAML::Node& x) { source_node.emplace(x); }},
         {"dqn", [&](const YAML::Node& x) { dqn_node.emplace(x); }},
         {"tasks",
          [&](const YAML::Node& x) {
            r.map(x, "tasks",
                  {{"n_tasks", [&](const YAML::Node& y) { c.n_tasks = r.count(y, "n_tasks"); }},
                   {"distances", [&](const YAML::Node& y) { c.distances = r.reals(y, "distances"); }},
                   {"train_target", [&](const YAML::Node& y) { c.train_target = r.flag(y, "train_target"); }}});
          }},
         {"eval",
          [&](const YAML::Node& x) {
            r.map(x, "eval", {{"seeds", [&](const YAML::Node& y) { c.seeds = r.count(y, "seeds"); }}});
          }},
         {"sweep",
          [&](const YAML::Node& x) {
            SweepSpec s;
            r.map(x, "sweep",
                  {{"field", [&](const YAML::Node& y) { s.field = r.text(y, "field"); }},
                   {"values", [&](const YAML::Node& y) { s.values = r.reals(y, "values"); }}});
            c.sweep = s;
          }},
         {"theory",
          [&](const YAML::Node& x) {
            r.map(x, "theory",
                  {{"hessian", [&](const YAML::Node& y) { c.theory.hessian = r.flag(y, "hessian"); }},
                   {"fd_step", [&](const YAML::Node& y) { c.theory.fd_step = r.real(y, "fd_step"); }},
                   {"jitter_attempts", [&](const YAML::Node& y) { c.theory.jitter_attempts = r.count(y, "jitter_attempts"); }},
                   {"full_batch_transitions",
                    [&](const YAML::Node& y) { c.theory.full_batch_transitions = r.count(y, "full_batch_transitions"); }},
                   {"full_batch_iterations",
                    [&](const YAML::Node& y) { c.theory.full_batch_iterations = r.count(y, "full_batch_iterations"); }}});
          }}});
  c.source = c.trainer;
  c.dqn = c.trainer;
  if (source_node) r.trainer(*source_node, c.source, "source");
  if (dqn_node) r.trainer(*dqn_node, c.dqn, "dqn");
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(source, 1, e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string to_yaml(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "name: " << c.name << "\n";
  if (!c.description.empty()) o << "description: \"" << c.description << "\"\n";
  o << "kind: " << to_string(c.kind) << "\n"
    << "seed: " << c.seed << "\n";
  if (!c.output.empty()) o << "output: " << c.output << "\n";
  o << "env:\n"
    << "  n_states: " << c.env.n_states << "\n"
    << "  n_actions: " << c.env.n_actions << "\n"
    << "  d_phi: " << c.env.d_phi << "\n"
    << "  widths: [";
  for (std::size_t i = 0; i < c.env.net.widths.size(); ++i) o << (i ? ", " : "") << c.env.net.widths[i];
  o << "]\n"
    << "  gamma: " << fmt(c.env.gamma) << "\n"
    << "  successors: " << c.env.successors << "\n";
  o << "trainer:\n" << trainer_yaml(c.trainer, "  ");
  o << "source:\n" << trainer_yaml(c.source, "  ");
  o << "dqn:\n" << trainer_yaml(c.dqn, "  ");
  o << "tasks:\n"
    << "  n_tasks: " << c.n_tasks << "\n"
    << "  distances: " << yaml_list(c.distances) << "\n"
    << "  train_target: " << (c.train_target ? "true" : "false") << "\n";
  o << "eval:\n"
    << "  seeds: " << c.seeds << "\n";
  if (c.sweep) o << "sweep:\n  field: " << c.sweep->field << "\n  values: " << yaml_list(c.sweep->values) << "\n";
  o << "theory:\n"
    << "  hessian: " << (c.theory.hessian ? "true" : "false") << "\n"
    << "  fd_step: " << fmt(c.theory.fd_step) << "\n"
    << "  jitter_attempts: " << c.theory.jitter_attempts << "\n"
    << "  full_batch_transitions: " << c.theory.full_batch_transitions << "\n"
    << "  full_batch_iterations: " << c.theory.full_batch_iterations << "\n";
  return o.str();
}

}  // namespace sfdqn
