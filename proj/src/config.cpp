#include "relboltz/errors.hpp"
#include "relboltz/harness.hpp"
#include "relboltz/numerics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace relboltz {

using nlohmann::json;

namespace {

// A JSON value together with its pointer, for error messages.
class Node {
 public:
  Node(const json& j, std::string pointer) : j_(&j), ptr_(std::move(pointer)) {}

  const std::string& pointer() const { return ptr_; }
  const json& value() const { return *j_; }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(ptr_.empty() ? "/" : ptr_, msg); }

  bool has(const char* key) const { return j_->is_object() && j_->contains(key); }

  Node at(const char* key) const {
    if (!j_->is_object()) fail("expected an object");
    if (!j_->contains(key)) throw ConfigError(ptr_ + "/" + key, "required value is missing");
    return {(*j_)[key], ptr_ + "/" + key};
  }

  std::optional<Node> find(const char* key) const {
    if (!has(key)) return std::nullopt;
    return at(key);
  }

  std::vector<Node> items() const {
    if (!j_->is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_->size(); ++i) out.emplace_back((*j_)[i], ptr_ + "/" + std::to_string(i));
    return out;
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    double v = j_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  double positive() const {
    double v = number();
    if (!(v > 0.0)) fail("expected a positive number");
    return v;
  }

  int integer(int lo, int hi) const {
    if (!j_->is_number_integer()) fail("expected an integer");
    auto v = j_->get<long long>();
    if (v < lo || v > hi) fail("expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(v);
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }

  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  Vec vector(int size) const {
    auto xs = items();
    if (static_cast<int>(xs.size()) != size) fail("expected " + std::to_string(size) + " numbers");
    Vec v(size);
    for (int i = 0; i < size; ++i) v[i] = xs[i].number();
    return v;
  }

  Interval interval() const {
    auto xs = items();
    if (xs.size() != 2) fail("expected [lo, hi]");
    Interval iv{xs[0].number(), xs[1].number()};
    if (!(iv.lo < iv.hi)) fail("expected lo < hi");
    return iv;
  }

  Box box(int dim) const {
    auto xs = items();
    if (static_cast<int>(xs.size()) != dim) fail("expected " + std::to_string(dim) + " [lo, hi] pairs");
    Box b(dim);
    for (int i = 0; i < dim; ++i) b[i] = xs[i].interval();
    return b;
  }

  double number_or(const char* key, double fallback) const { return has(key) ? at(key).number() : fallback; }
  double positive_or(const char* key, double fallback) const { return has(key) ? at(key).positive() : fallback; }
  int integer_or(const char* key, int fallback, int lo, int hi) const {
    return has(key) ? at(key).integer(lo, hi) : fallback;
  }
  bool boolean_or(const char* key, bool fallback) const { return has(key) ? at(key).boolean() : fallback; }

 private:
  const json* j_;
  std::string ptr_;
};

void require_inside(const Node& at, const Box& chart, const Box& b) {
  if (!chart.contains_box(b)) at.fail("box leaves the chart");
}

std::vector<BumpSource> parse_bumps(const Node& node, int n) {
  std::vector<BumpSource> out;
  for (const Node& b : node.items()) {
    BumpSource s;
    s.x = b.at("x").vector(n);
    s.p = b.at("p").vector(n);
    s.radius = b.positive_or("radius", s.radius);
    s.amplitude = b.number_or("amplitude", s.amplitude);
    out.push_back(s);
  }
  return out;
}

KernelParams parse_kernel(const Node& k, int n, BeamConfig& beams) {
  KernelParams p;
  p.W = k.at("W").box(n);
  p.spatial_margin = k.positive_or("spatial_margin", p.spatial_margin);
  p.r0 = k.number_or("r0", p.r0);
  p.r1 = k.number_or("r1", p.r1);
  if (!(0.0 < p.r0 && p.r0 < p.r1)) k.at("r1").fail("need 0 < r0 < r1");
  p.q_box = k.at("q_box").box(n);
  Node pp = k.at("pp_box"), qp = k.at("qp_box");
  bool pp_beams = pp.value().is_string(), qp_beams = qp.value().is_string();
  if (pp_beams != qp_beams) qp.fail("pp_box and qp_box must both be \"beams\" or both be boxes");
  if (pp_beams) {
    if (pp.string() != "beams") pp.fail("expected a box or \"beams\"");
    if (qp.string() != "beams") qp.fail("expected a box or \"beams\"");
    beams.kernel_from_beams = true;
    beams.beam_box_half_width = k.positive_or("beam_box_half_width", beams.beam_box_half_width);
  } else {
    p.pp_box = pp.box(n);
    p.qp_box = qp.box(n);
  }
  p.momentum_margin = k.positive_or("momentum_margin", p.momentum_margin);
  p.amplitude = k.number_or("amplitude", p.amplitude);
  if (p.amplitude < 0.0) k.at("amplitude").fail("amplitude must be nonnegative");
  return p;
}

CollisionOptions parse_collision(const Node& c, CollisionOptions o) {
  o.order = c.integer_or("order", o.order, 1, 16);
  o.panels = c.integer_or("panels", o.panels, 1, 256);
  o.causal_filter = c.boolean_or("causal_filter", o.causal_filter);
  return o;
}

VlasovOptions parse_vlasov(const Node& v, VlasovOptions o) {
  o.min_panels = v.integer_or("min_panels", o.min_panels, 1, 4096);
  o.order = v.integer_or("order", o.order, 1, 16);
  return o;
}

}  // namespace

MetricSpec metric_from_json(const json& j, const std::string& pointer) {
  Node m(j, pointer);
  const int n = m.at("n").integer(2, kMaxDim);
  std::optional<Box> chart;
  if (auto c = m.find("chart_box")) chart = c->box(n);
  std::string kind = m.at("kind").string();
  std::optional<Node> params = m.find("params");
  if (params && !params->value().is_object()) params->fail("expected an object");
  if (kind == "minkowski") return MetricSpec::minkowski(n, chart);
  if (kind == "conformal_minkowski") {
    double phi0 = params ? params->number_or("phi0", 0.0) : 0.0;
    Vec dphi = params && params->has("dphi") ? params->at("dphi").vector(n) : Vec(Vec::Zero(n));
    return MetricSpec::conformal_minkowski_affine(n, phi0, dphi, chart);
  }
  if (kind == "diagonal_warped") {
    if (!params) m.at("params");
    std::vector<double> coeffs;
    for (const Node& c : params->at("a").items()) coeffs.push_back(c.number());
    if (coeffs.empty()) params->at("a").fail("need at least one coefficient");
    return MetricSpec::diagonal_warped_polynomial(n, coeffs, chart);
  }
  if (kind == "custom") m.at("kind").fail("custom metrics cannot be loaded from a configuration");
  m.at("kind").fail("unknown metric kind '" + kind + "'");
}

json metric_to_json(const MetricSpec& spec) {
  if (spec.kind() == MetricKind::CustomAnalytic) throw ConfigError("/metric/kind", "custom metrics are not serialisable");
  json box = json::array();
  for (int i = 0; i < spec.dim(); ++i) box.push_back({spec.chart()[i].lo, spec.chart()[i].hi});
  return {{"kind", to_string(spec.kind())},
          {"n", spec.dim()},
          {"params", json::parse(spec.params_json())},
          {"chart_box", box}};
}

ScenarioConfig parse_config(const json& doc) {
  Node root(doc, "");
  if (!doc.is_object()) root.fail("configuration must be a JSON object");
  ScenarioConfig cfg;
  cfg.raw = doc;
  cfg.metric = metric_from_json(root.at("metric").value(), "/metric");
  const int n = cfg.metric.dim();
  const Box& chart = cfg.metric.chart();
  if (auto s = root.find("seed")) {
    if (!s->value().is_number_unsigned()) s->fail("expected a nonnegative integer");
    cfg.seed = s->value().get<std::uint64_t>();
  }

  if (auto k = root.find("kernel")) {
    cfg.kernel = parse_kernel(*k, n, cfg.beams);
    require_inside(k->at("W"), chart, cfg.kernel->W.inflated(cfg.kernel->spatial_margin));
  }

  // Observers and diamond.
  ProbeScenario& ps = cfg.probe;
  ps.family = ObserverFamily::standard(n);
  if (auto o = root.find("observers")) {
    if (auto params = o->find("params")) {
      std::vector<Vec> list;
      for (const Node& a : params->items()) list.push_back(a.vector(n - 1));
      try {
        ps.family = ObserverFamily::from_params(n, list);
      } catch (const Error& e) {
        params->fail(e.what());
      }
    } else {
      double hw = o->positive_or("half_width", 0.5);
      int per_axis = o->integer_or("per_axis", 33, 1, 1025);
      ps.family = ObserverFamily::standard(n, hw, per_axis);
    }
  }
  double s_minus = -0.5, s_plus = 0.5;
  if (auto d = root.find("diamond")) {
    s_minus = d->number_or("s_minus", s_minus);
    s_plus = d->number_or("s_plus", s_plus);
    if (!(s_minus < s_plus)) d->at("s_plus").fail("s_minus must be below s_plus");
    if (!(s_minus > -1.0)) d->at("s_minus").fail("s_minus must be above -1");
    if (!(s_plus < 1.0)) d->at("s_plus").fail("s_plus must be below 1");
  }
  ps.diamond = CausalDiamond::on(ps.family, s_minus, s_plus);
  if (root.has("observers") || root.has("diamond")) {
    try {
      validate_observers(cfg.metric, ps.family, ps.diamond, ps.causal);
    } catch (const DomainError& e) {
      throw ConfigError(root.has("observers") ? "/observers" : "/diamond", e.what());
    }
  }

  if (auto t = root.find("targets"))
    for (const Node& w : t->items()) {
      Vec v = w.vector(n);
      if (!chart.contains(v)) w.fail("target outside the chart");
      cfg.targets.push_back(v);
    }

  if (auto s = root.find("source")) {
    cfg.beams.epsilon = s->positive_or("epsilon", cfg.beams.epsilon);
    cfg.beams.extent = s->positive_or("extent", cfg.beams.extent);
    ps.tilt = s->positive_or("tilt", ps.tilt);
    ps.source_time = s->number_or("slice_time", ps.source_time);
    ps.beam_energy = s->positive_or("beam_energy", ps.beam_energy);
    if (auto a = s->find("observer")) ps.source_observer = a->vector(n - 1);
    if (auto b = s->find("bumps")) cfg.source = parse_bumps(*b, n);
    if (auto b = s->find("second")) cfg.second_source = parse_bumps(*b, n);
    if (auto f = s->find("norm_fraction")) cfg.norm_fraction = f->positive();
  }

  if (auto s = root.find("solver")) {
    Box base = s->at("base_box").box(n);
    require_inside(s->at("base_box"), chart, base);
    Box mom = s->at("mom_box").box(n);
    cfg.solver.grid = PhaseGrid::uniform(base, mom, s->integer_or("per_axis", 10, 2, 512));
    cfg.solver.tol = s->positive_or("tol", cfg.solver.tol);
    cfg.solver.max_iter = s->integer_or("max_iter", cfg.solver.max_iter, 1, 100000);
    cfg.solver.validation_points = s->integer_or("validation_points", cfg.solver.validation_points, 0, 100000);
    if (auto c = s->find("collision")) cfg.solver.collision = parse_collision(*c, cfg.solver.collision);
    if (auto v = s->find("vlasov")) cfg.solver.vlasov = parse_vlasov(*v, cfg.solver.vlasov);
    cfg.collision_samples = s->integer_or("collision_samples", cfg.collision_samples, 1, 10000000);
    if (auto e = s->find("eps")) {
      cfg.linearize.eps.clear();
      for (const Node& x : e->items()) cfg.linearize.eps.push_back(x.positive());
      if (cfg.linearize.eps.size() < 2) e->fail("need at least two values");
    }
    cfg.linearize.polarization = s->boolean_or("polarization", false);
  }
  cfg.solver.seed = cfg.seed;

  if (auto d = root.find("detector")) {
    ps.detector_count = d->integer_or("count", ps.detector_count, 3, 1025);
    ps.detector_spacing = d->positive_or("spacing", ps.detector_spacing);
    ps.section_energy = d->positive_or("section_energy", ps.section_energy);
    if (auto a = d->find("observer")) ps.detector_observer = a->vector(n - 1);
    if (auto c = d->find("collision")) cfg.measure.collision = parse_collision(*c, cfg.measure.collision);
    if (auto v = d->find("beam_vlasov")) cfg.measure.beams = parse_vlasov(*v, cfg.measure.beams);
    if (auto v = d->find("outer_vlasov")) cfg.measure.outer = parse_vlasov(*v, cfg.measure.outer);
    cfg.beams.refine = d->boolean_or("refine", cfg.beams.refine);
    cfg.beams.recover = d->boolean_or("recover", cfg.beams.recover);
    if (auto w = d->find("window")) cfg.recovery.window = w->interval();
    cfg.recovery.spacing = d->positive_or("line_spacing", cfg.recovery.spacing);
    cfg.recovery.kappa = d->positive_or("kappa", cfg.recovery.kappa);
  }
  cfg.recovery.measure = cfg.measure;

  if (auto g = root.find("geodesic")) {
    GeodesicConfig gc;
    gc.x = g->at("x").vector(n);
    if (!chart.contains(gc.x)) g->at("x").fail("start point outside the chart");
    gc.p = g->at("p").vector(n);
    gc.duration = g->number_or("duration", gc.duration);
    gc.step = g->positive_or("step", gc.step);
    cfg.geodesic = gc;
  }
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

PhaseDensity bump_density(int n, const std::vector<BumpSource>& bumps) {
  std::vector<PhaseDensity> terms;
  std::vector<double> coeffs;
  for (const BumpSource& b : bumps) {
    auto fn = [b](const Vec& x, const Vec& p) {
      return unit_bump((x - b.x).norm() / b.radius) * unit_bump((p - b.p).norm() / b.radius);
    };
    terms.push_back(PhaseDensity::analytic(n, fn, {Box::cube(b.x, b.radius), Box::cube(b.p, b.radius)}, true, 1.0));
    coeffs.push_back(b.amplitude);
  }
  if (terms.empty()) return PhaseDensity::zero(n);
  if (terms.size() == 1) return scaled(terms.front(), coeffs.front());
  return linear_combination(coeffs, terms);
}

}  // namespace relboltz
