#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <system_error>

#include "mwtomo/parallel.hpp"
#include "mwtomo/wave.hpp"

namespace mwt {

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

namespace {

struct NameRow {
  const char* name;
  int value;
};

int from_name(const std::string& s, const NameRow* rows, int n, const char* what) {
  for (int i = 0; i < n; ++i)
    if (s == rows[i].name) return rows[i].value;
  std::string msg = std::string("config: unknown ") + what + " \"" + s + "\" (expected one of:";
  for (int i = 0; i < n; ++i) msg += std::string(" ") + rows[i].name;
  throw ValidationError(msg + ")");
}

constexpr NameRow kSpeedNames[] = {{"constant", 0}, {"trig", 1}, {"square-jump", 2}};
constexpr NameRow kPhantomNames[] = {{"shepp-logan", 0}, {"gaussians", 1}};
constexpr NameRow kBoundaryNames[] = {{"full", 0}, {"bottom-left-adjacent", 1}};
constexpr NameRow kMethodNames[] = {{"landweber", 0}, {"atr", 1}};
constexpr NameRow kAveragingNames[] = {{"bump", 0}, {"ramp", 1}};
constexpr NameRow kTimeWeightNames[] = {{"ones", 0}, {"sharp-cutoff", 1}, {"cosine-taper", 2}};
constexpr NameRow kReversalNames[] = {{"full", 0}, {"partial-zero", 1}, {"partial-zaremba", 2}};
constexpr NameRow kSpectrumKindNames[] = {{"normal-transpose", 1}, {"normal-wave-adjoint", 2}};

const char* speed_kind_name(SpeedKind k) { return kSpeedNames[static_cast<int>(k)].name; }
const char* phantom_kind_name(PhantomKind k) { return kPhantomNames[static_cast<int>(k)].name; }
const char* boundary_kind_name(BoundaryKind k) { return kBoundaryNames[static_cast<int>(k)].name; }
const char* method_kind_name(MethodKind k) { return kMethodNames[static_cast<int>(k)].name; }
const char* averaging_kind_name(AveragingKind k) { return kAveragingNames[static_cast<int>(k)].name; }

template <typename E, int N>
E enum_from(const std::string& s, const NameRow (&rows)[N], const char* what) {
  return static_cast<E>(from_name(s, rows, N, what));
}

// ---------------------------------------------------------------------------
// Strict JSON access
// ---------------------------------------------------------------------------

void expect_object(const nlohmann::json& j, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string("config: ") + where + " must be a JSON object");
}

void expect_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ValidationError(std::string("config: unknown key \"") + item.key() + "\" in " + where);
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const T& fallback, const char* where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config: key \"") + key + "\" in " + where + " has the wrong type");
  }
}

std::string gamma_tag(double gamma) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", gamma);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["id"] = cfg.id;
  j["grid"] = {{"nx", cfg.nx}, {"T", cfg.T}, {"safety", cfg.safety}};

  nlohmann::json speed{{"kind", speed_kind_name(cfg.speed.kind)}};
  if (cfg.speed.kind == SpeedKind::Constant) speed["c0"] = cfg.speed.c0;
  if (cfg.speed.kind == SpeedKind::SquareJump) {
    speed["c_in"] = cfg.speed.square.c_in;
    speed["c_out"] = cfg.speed.square.c_out;
    speed["half_side"] = cfg.speed.square.half_side;
    speed["cx"] = cfg.speed.square.cx;
    speed["cy"] = cfg.speed.square.cy;
  }
  j["speed"] = speed;

  nlohmann::json phantom{{"kind", phantom_kind_name(cfg.phantom.kind)}};
  if (cfg.phantom.kind == PhantomKind::SheppLogan) phantom["supersample"] = cfg.phantom.supersample;
  if (cfg.phantom.kind == PhantomKind::Gaussians) {
    nlohmann::json blobs = nlohmann::json::array();
    for (const GaussianBlob& b : cfg.phantom.blobs)
      blobs.push_back({{"cx", b.cx}, {"cy", b.cy}, {"width", b.width}, {"amplitude", b.amplitude}});
    phantom["blobs"] = blobs;
  }
  j["phantom"] = phantom;

  nlohmann::json boundary{{"kind", boundary_kind_name(cfg.boundary.kind)}};
  if (cfg.boundary.kind == BoundaryKind::BottomLeftAdjacent)
    boundary["fraction"] = cfg.boundary.adjacent_fraction;
  j["boundary"] = boundary;

  j["method"] = method_kind_name(cfg.method);
  j["gammas"] = cfg.gammas;
  j["steps"] = cfg.steps;
  j["log_every"] = cfg.log_every;
  j["chi_margin"] = cfg.chi_margin;
  j["time_weight"] = time_weight_name(cfg.time_weight);
  j["noise_sigma"] = cfg.noise_sigma;
  if (cfg.filter)
    j["filter"] = {{"cutoff_fraction", cfg.filter->cutoff_fraction},
                   {"cone_speed", cfg.filter->cone_speed},
                   {"taper", cfg.filter->taper}};
  j["fine"] = {{"space_factor", cfg.fine.space_factor},
               {"time_factor", cfg.fine.time_factor},
               {"max_bytes", cfg.fine.max_bytes}};
  j["atr"] = {{"averaging", averaging_kind_name(cfg.atr.averaging)},
              {"count", cfg.atr.count},
              {"lo_fraction", cfg.atr.lo_fraction},
              {"ramp_fraction", cfg.atr.ramp_fraction},
              {"reversal", time_reversal_mode_name(cfg.atr.reversal)}};
  j["spectrum"] = {{"margin", cfg.spectrum.margin},
                   {"kind", operator_kind_name(cfg.spectrum.kind)},
                   {"image_count", cfg.spectrum.image_count},
                   {"max_bytes", cfg.spectrum.max_bytes}};
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  expect_object(j, "document root");
  expect_keys(j,
              {"id", "grid", "speed", "phantom", "boundary", "method", "gammas", "steps", "log_every",
               "chi_margin", "time_weight", "noise_sigma", "filter", "fine", "atr", "spectrum",
               "out_dir", "seed", "threads"},
              "document root");
  ExperimentConfig cfg;
  cfg.id = get_field<std::string>(j, "id", cfg.id, "document root");

  if (j.contains("grid")) {
    const auto& jg = j.at("grid");
    expect_object(jg, "grid");
    expect_keys(jg, {"nx", "T", "safety"}, "grid");
    cfg.nx = get_field<int>(jg, "nx", cfg.nx, "grid");
    cfg.T = get_field<double>(jg, "T", cfg.T, "grid");
    cfg.safety = get_field<double>(jg, "safety", cfg.safety, "grid");
  }

  if (j.contains("speed")) {
    const auto& js = j.at("speed");
    expect_object(js, "speed");
    expect_keys(js, {"kind", "c0", "c_in", "c_out", "half_side", "cx", "cy"}, "speed");
    cfg.speed.kind = enum_from<SpeedKind>(get_field<std::string>(js, "kind", "constant", "speed"),
                                          kSpeedNames, "speed kind");
    cfg.speed.c0 = get_field<double>(js, "c0", cfg.speed.c0, "speed");
    cfg.speed.square.c_in = get_field<double>(js, "c_in", cfg.speed.square.c_in, "speed");
    cfg.speed.square.c_out = get_field<double>(js, "c_out", cfg.speed.square.c_out, "speed");
    cfg.speed.square.half_side = get_field<double>(js, "half_side", cfg.speed.square.half_side, "speed");
    cfg.speed.square.cx = get_field<double>(js, "cx", cfg.speed.square.cx, "speed");
    cfg.speed.square.cy = get_field<double>(js, "cy", cfg.speed.square.cy, "speed");
  }

  if (j.contains("phantom")) {
    const auto& jp = j.at("phantom");
    expect_object(jp, "phantom");
    expect_keys(jp, {"kind", "supersample", "blobs"}, "phantom");
    cfg.phantom.kind = enum_from<PhantomKind>(get_field<std::string>(jp, "kind", "shepp-logan", "phantom"),
                                              kPhantomNames, "phantom kind");
    cfg.phantom.supersample = get_field<int>(jp, "supersample", cfg.phantom.supersample, "phantom");
    if (jp.contains("blobs")) {
      if (!jp.at("blobs").is_array()) throw ValidationError("config: phantom.blobs must be an array");
      cfg.phantom.blobs.clear();
      for (const auto& jb : jp.at("blobs")) {
        expect_object(jb, "phantom blob");
        expect_keys(jb, {"cx", "cy", "width", "amplitude"}, "phantom blob");
        GaussianBlob b;
        b.cx = get_field<double>(jb, "cx", b.cx, "phantom blob");
        b.cy = get_field<double>(jb, "cy", b.cy, "phantom blob");
        b.width = get_field<double>(jb, "width", b.width, "phantom blob");
        b.amplitude = get_field<double>(jb, "amplitude", b.amplitude, "phantom blob");
        cfg.phantom.blobs.push_back(b);
      }
    }
  }

  if (j.contains("boundary")) {
    const auto& jb = j.at("boundary");
    expect_object(jb, "boundary");
    expect_keys(jb, {"kind", "fraction"}, "boundary");
    cfg.boundary.kind = enum_from<BoundaryKind>(get_field<std::string>(jb, "kind", "full", "boundary"),
                                                kBoundaryNames, "boundary kind");
    cfg.boundary.adjacent_fraction =
        get_field<double>(jb, "fraction", cfg.boundary.adjacent_fraction, "boundary");
  }

  cfg.method = enum_from<MethodKind>(get_field<std::string>(j, "method", "landweber", "document root"),
                                     kMethodNames, "method");
  cfg.gammas = get_field<std::vector<double>>(j, "gammas", cfg.gammas, "document root");
  cfg.steps = get_field<int>(j, "steps", cfg.steps, "document root");
  cfg.log_every = get_field<int>(j, "log_every", cfg.log_every, "document root");
  cfg.chi_margin = get_field<double>(j, "chi_margin", cfg.chi_margin, "document root");
  cfg.time_weight = static_cast<TimeWeight>(
      from_name(get_field<std::string>(j, "time_weight", "sharp-cutoff", "document root"),
                kTimeWeightNames, 3, "time weight"));
  cfg.noise_sigma = get_field<double>(j, "noise_sigma", cfg.noise_sigma, "document root");

  if (j.contains("filter") && !j.at("filter").is_null()) {
    const auto& jf = j.at("filter");
    expect_object(jf, "filter");
    expect_keys(jf, {"cutoff_fraction", "cone_speed", "taper"}, "filter");
    FilterSpec f;
    f.cutoff_fraction = get_field<double>(jf, "cutoff_fraction", f.cutoff_fraction, "filter");
    f.cone_speed = get_field<double>(jf, "cone_speed", f.cone_speed, "filter");
    f.taper = get_field<double>(jf, "taper", f.taper, "filter");
    cfg.filter = f;
  }

  if (j.contains("fine")) {
    const auto& jf = j.at("fine");
    expect_object(jf, "fine");
    expect_keys(jf, {"space_factor", "time_factor", "max_bytes"}, "fine");
    cfg.fine.space_factor = get_field<double>(jf, "space_factor", cfg.fine.space_factor, "fine");
    cfg.fine.time_factor = get_field<double>(jf, "time_factor", cfg.fine.time_factor, "fine");
    cfg.fine.max_bytes = get_field<std::int64_t>(jf, "max_bytes", cfg.fine.max_bytes, "fine");
  }

  if (j.contains("atr")) {
    const auto& ja = j.at("atr");
    expect_object(ja, "atr");
    expect_keys(ja, {"averaging", "count", "lo_fraction", "ramp_fraction", "reversal"}, "atr");
    cfg.atr.averaging = enum_from<AveragingKind>(get_field<std::string>(ja, "averaging", "ramp", "atr"),
                                                 kAveragingNames, "averaging kind");
    cfg.atr.count = get_field<int>(ja, "count", cfg.atr.count, "atr");
    cfg.atr.lo_fraction = get_field<double>(ja, "lo_fraction", cfg.atr.lo_fraction, "atr");
    cfg.atr.ramp_fraction = get_field<double>(ja, "ramp_fraction", cfg.atr.ramp_fraction, "atr");
    cfg.atr.reversal = static_cast<TimeReversalMode>(
        from_name(get_field<std::string>(ja, "reversal", "full", "atr"), kReversalNames, 3,
                  "reversal mode"));
  }

  if (j.contains("spectrum")) {
    const auto& jsp = j.at("spectrum");
    expect_object(jsp, "spectrum");
    expect_keys(jsp, {"margin", "kind", "image_count", "max_bytes"}, "spectrum");
    cfg.spectrum.margin = get_field<double>(jsp, "margin", cfg.spectrum.margin, "spectrum");
    cfg.spectrum.kind = static_cast<OperatorKind>(
        from_name(get_field<std::string>(jsp, "kind", "normal-transpose", "spectrum"),
                  kSpectrumKindNames, 2, "spectrum operator kind"));
    cfg.spectrum.image_count = get_field<int>(jsp, "image_count", cfg.spectrum.image_count, "spectrum");
    cfg.spectrum.max_bytes = get_field<std::int64_t>(jsp, "max_bytes", cfg.spectrum.max_bytes, "spectrum");
  }

  cfg.out_dir = get_field<std::string>(j, "out_dir", cfg.out_dir, "document root");
  cfg.seed = get_field<std::uint64_t>(j, "seed", cfg.seed, "document root");
  cfg.threads = get_field<int>(j, "threads", cfg.threads, "document root");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.id.empty()) throw ValidationError("config: id must be nonempty");
  for (char ch : cfg.id)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.')
      throw ValidationError("config: id may contain only letters, digits, '-', '_', '.'");
  if (cfg.nx < 3) throw ValidationError("config: grid.nx must be at least 3");
  if (!(cfg.T > 0.0)) throw ValidationError("config: grid.T must be positive");
  if (!(cfg.safety >= 1.0)) throw ValidationError("config: grid.safety must be >= 1");

  if (cfg.speed.kind == SpeedKind::Constant && !(cfg.speed.c0 > 0.0))
    throw ValidationError("config: speed.c0 must be positive");
  if (cfg.speed.kind == SpeedKind::SquareJump) {
    if (!(cfg.speed.square.c_in > 0.0) || !(cfg.speed.square.c_out > 0.0))
      throw ValidationError("config: square-jump speeds must be positive");
    if (!(cfg.speed.square.half_side > 0.0))
      throw ValidationError("config: square-jump half_side must be positive");
  }

  if (cfg.phantom.supersample < 1) throw ValidationError("config: phantom.supersample must be >= 1");
  if (cfg.phantom.kind == PhantomKind::Gaussians) {
    if (cfg.phantom.blobs.empty()) throw ValidationError("config: phantom.blobs must be nonempty");
    for (const GaussianBlob& b : cfg.phantom.blobs)
      if (!(b.width > 0.0)) throw ValidationError("config: phantom blob width must be positive");
  }

  if (cfg.boundary.adjacent_fraction < 0.0 || cfg.boundary.adjacent_fraction > 1.0)
    throw ValidationError("config: boundary.fraction must lie in [0, 1]");

  if (cfg.method == MethodKind::Landweber) {
    if (cfg.gammas.empty()) throw ValidationError("config: gammas must be nonempty");
    std::vector<std::string> tags;
    for (double gm : cfg.gammas) {
      if (!(gm > 0.0) || !std::isfinite(gm)) throw ValidationError("config: gammas must be positive");
      tags.push_back(gamma_tag(gm));
    }
    std::sort(tags.begin(), tags.end());
    if (std::adjacent_find(tags.begin(), tags.end()) != tags.end())
      throw ValidationError("config: gammas must be distinct");
  }
  if (cfg.steps < 1) throw ValidationError("config: steps must be >= 1");
  if (cfg.log_every < 1) throw ValidationError("config: log_every must be >= 1");
  if (cfg.chi_margin < 0.0 || cfg.chi_margin >= 0.5)
    throw ValidationError("config: chi_margin must lie in [0, 0.5)");
  if (!(cfg.noise_sigma >= 0.0)) throw ValidationError("config: noise_sigma must be >= 0");

  if (cfg.filter) {
    if (!(cfg.filter->cutoff_fraction > 0.0) || cfg.filter->cutoff_fraction > 1.0)
      throw ValidationError("config: filter.cutoff_fraction must lie in (0, 1]");
    if (!(cfg.filter->cone_speed >= 0.0)) throw ValidationError("config: filter.cone_speed must be >= 0");
    if (cfg.filter->taper < 0.0 || cfg.filter->taper >= 1.0)
      throw ValidationError("config: filter.taper must lie in [0, 1)");
  }

  if (!(cfg.fine.space_factor >= 1.0) || !(cfg.fine.time_factor >= 1.0))
    throw ValidationError("config: fine factors must be >= 1");
  if (cfg.fine.time_factor * cfg.safety < cfg.fine.space_factor * (1.0 - 1e-12))
    throw ValidationError("config: fine.time_factor too small, the fine grid would break its CFL bound");
  if (cfg.fine.max_bytes <= 0) throw ValidationError("config: fine.max_bytes must be positive");

  if (cfg.method == MethodKind::Atr) {
    const int min_count = cfg.atr.averaging == AveragingKind::Ramp ? 2 : 1;
    if (cfg.atr.count < min_count) throw ValidationError("config: atr.count too small for the averaging kind");
    if (cfg.atr.lo_fraction < 0.0 || cfg.atr.lo_fraction >= 1.0)
      throw ValidationError("config: atr.lo_fraction must lie in [0, 1)");
    if (cfg.atr.averaging == AveragingKind::Ramp &&
        (!(cfg.atr.ramp_fraction > 0.0) || cfg.atr.lo_fraction + cfg.atr.ramp_fraction > 1.0 + 1e-12))
      throw ValidationError("config: atr ramp must fit between lo_fraction*T and T");
    const bool full_boundary = cfg.boundary.kind == BoundaryKind::Full;
    if (full_boundary != (cfg.atr.reversal == TimeReversalMode::Full))
      throw ValidationError("config: atr.reversal must match the boundary coverage");
  }

  if (cfg.spectrum.margin < 0.0 || cfg.spectrum.margin >= 0.5)
    throw ValidationError("config: spectrum.margin must lie in [0, 0.5)");
  if (cfg.spectrum.kind == OperatorKind::Measurement)
    throw ValidationError("config: spectrum.kind must be a normal form");
  if (cfg.spectrum.image_count < 0) throw ValidationError("config: spectrum.image_count must be >= 0");
  if (cfg.spectrum.max_bytes <= 0) throw ValidationError("config: spectrum.max_bytes must be positive");

  if (cfg.out_dir.empty()) throw ValidationError("config: out_dir must be nonempty");
  if (cfg.threads < 1) throw ValidationError("config: threads must be >= 1");
}

// ---------------------------------------------------------------------------
// Wiring
// ---------------------------------------------------------------------------

double speed_max(const SpeedSpec& spec) {
  switch (spec.kind) {
    case SpeedKind::Constant: return spec.c0;
    case SpeedKind::Trig: return 1.5;
    case SpeedKind::SquareJump: return std::max(spec.square.c_in, spec.square.c_out);
  }
  throw ValidationError("config: unknown speed kind");
}

FieldXd render_speed(const SpeedSpec& spec, const GridSpec& g) {
  switch (spec.kind) {
    case SpeedKind::Constant: return speed_constant(g, spec.c0);
    case SpeedKind::Trig: return speed_trig(g);
    case SpeedKind::SquareJump: return speed_square_jump(g, spec.square);
  }
  throw ValidationError("config: unknown speed kind");
}

FieldXd render_phantom(const PhantomSpec& spec, const GridSpec& g) {
  switch (spec.kind) {
    case PhantomKind::SheppLogan: return render_shepp_logan(g, spec.supersample);
    case PhantomKind::Gaussians: return render_gaussians(g, spec.blobs);
  }
  throw ValidationError("config: unknown phantom kind");
}

GammaMask make_gamma(const BoundarySpec& spec, const PerimeterMap& p, const GridSpec& g) {
  switch (spec.kind) {
    case BoundaryKind::Full: return gamma_full(p);
    case BoundaryKind::BottomLeftAdjacent:
      return gamma_bottom_left_adjacent(p, g, spec.adjacent_fraction);
  }
  throw ValidationError("config: unknown boundary kind");
}

GridSpec config_grid(const ExperimentConfig& cfg) {
  return make_grid(cfg.nx, cfg.T, speed_max(cfg.speed), cfg.safety);
}

OperatorPair<FieldXd, TraceXd> wave_operator_pair(const FieldXd& c, const GridSpec& g,
                                                  const PerimeterMap& p, const MeasurementConfig& mc) {
  OperatorPair<FieldXd, TraceXd> ops;
  ops.forward = [c, g, p, mc](const FieldXd& f) { return TraceXd(apply_L(f, c, g, p, mc).values); };
  ops.adjoint = [c, g, p, mc](const TraceXd& d) { return apply_Lstar_exact(d, c, g, p, mc); };
  ops.normal = [c, g, p, mc](const FieldXd& f) { return apply_normal_exact(f, c, g, p, mc); };
  ops.field_inner = [c, g](const FieldXd& a, const FieldXd& b) { return weighted_inner(a, b, c, g); };
  ops.data_inner = [g](const TraceXd& a, const TraceXd& b) { return trace_inner(a, b, g); };
  return ops;
}

// ---------------------------------------------------------------------------
// Data synthesis
// ---------------------------------------------------------------------------

namespace {

double slot_coord(const PerimeterMap& p, const GridSpec& g, int slot) {
  const Side s = static_cast<Side>(p.side(slot));
  return (s == Side::Bottom || s == Side::Top) ? g.x(p.ix(slot)) : g.y(p.iy(slot));
}

/// Bilinear resample of a fine trace onto the coarse (time, perimeter) nodes,
/// side by side; each side's free coordinate runs uniformly, so fractional
/// indices come from the first slot's coordinate and the per-slot step.
TraceXd resample_trace(const TraceXd& fine, const GridSpec& gf, const PerimeterMap& pf,
                       const GridSpec& g, const PerimeterMap& p) {
  TraceXd out(g.nt + 1, p.n());
  for (int k = 0; k < p.n(); ++k) {
    const Side s = static_cast<Side>(p.side(k));
    const int fb = pf.side_begin(s);
    const int fs = pf.side_size(s);
    const double c0 = slot_coord(pf, gf, fb);
    const double step = fs > 1 ? slot_coord(pf, gf, fb + 1) - c0 : 1.0;
    double u = (slot_coord(p, g, k) - c0) / step;
    u = std::clamp(u, 0.0, static_cast<double>(fs - 1));
    const int i0 = std::min(static_cast<int>(u), fs - 2 >= 0 ? fs - 2 : 0);
    const double wu = u - i0;

    for (int n = 0; n <= g.nt; ++n) {
      double v = g.t(n) / gf.dt;
      v = std::clamp(v, 0.0, static_cast<double>(gf.nt));
      const int j0 = std::min(static_cast<int>(v), gf.nt - 1);
      const double wv = v - j0;
      const double lo = (1.0 - wu) * fine(j0, fb + i0) + wu * fine(j0, fb + i0 + 1);
      const double hi = (1.0 - wu) * fine(j0 + 1, fb + i0) + wu * fine(j0 + 1, fb + i0 + 1);
      out(n, k) = (1.0 - wv) * lo + wv * hi;
    }
  }
  return out;
}

}  // namespace

BoundaryTrace<double> synthesize_data(const ExperimentConfig& cfg, const GridSpec& g,
                                      const PerimeterMap& p, const GammaMask& gamma,
                                      const FieldXd& f_true) {
  TraceXd raw;
  if (cfg.fine.space_factor == 1.0 && cfg.fine.time_factor == 1.0) {
    raw = forward_solve(f_true, render_speed(cfg.speed, g), g, p).trace;
  } else {
    const int nxf = static_cast<int>(std::lround((cfg.nx - 1) * cfg.fine.space_factor)) + 1;
    const double fine_safety =
        std::max(1.0, cfg.safety * cfg.fine.time_factor / cfg.fine.space_factor);
    const GridSpec gf = make_grid(nxf, cfg.T, speed_max(cfg.speed), fine_safety);
    const PerimeterMap pf = make_perimeter(gf);
    const std::int64_t bytes =
        8LL * (static_cast<std::int64_t>(gf.nt + 1) * pf.n() + 6LL * gf.nx * gf.ny);
    if (bytes > cfg.fine.max_bytes)
      throw ValidationError("config: fine-grid forward would need " + std::to_string(bytes) +
                            " bytes, above fine.max_bytes");
    const FieldXd ff = render_phantom(cfg.phantom, gf);
    const FieldXd cf = render_speed(cfg.speed, gf);
    raw = resample_trace(forward_solve(ff, cf, gf, pf).trace, gf, pf, g, p);
  }

  BoundaryTrace<double> m;
  m.values = std::move(raw);
  m.gamma = gamma;
  zero_outside(m.values, m.gamma);
  if (cfg.noise_sigma > 0.0) m = add_noise(m, cfg.noise_sigma, cfg.seed);
  m.values.colwise() *= time_weights(g, cfg.time_weight);
  // The filter acts on the data once; keeping it out of the iteration
  // operators preserves the exact-adjoint pairing, so the normal operator
  // stays PSD and the step-size bound gamma < 2 / lambda_max stands.
  if (cfg.filter) m.values = apply_filter(m.values, *cfg.filter, g, p);
  return m;
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

namespace {

struct Stage {
  ExperimentConfig cfg;
  GridSpec g;
  PerimeterMap p;
  FieldXd c;
  GammaMask gamma;
  FieldXd f_true;
  std::filesystem::path dir;
  nlohmann::json images = nlohmann::json::array();
  nlohmann::json tables = nlohmann::json::array();
};

Stage prepare(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Stage st;
  st.cfg = cfg;
  st.g = config_grid(cfg);
  st.p = make_perimeter(st.g);
  st.c = render_speed(cfg.speed, st.g);
  st.gamma = make_gamma(cfg.boundary, st.p, st.g);
  st.f_true = render_phantom(cfg.phantom, st.g);
  st.dir = cfg.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(st.dir, ec);
  if (ec) throw IoError("cannot create output directory " + st.dir.string() + ": " + ec.message());
  return st;
}

void add_image(Stage& st, const std::string& name, const FieldXd& img) {
  const ImageRecord rec = write_pgm(st.dir / name, img);
  st.images.push_back({{"file", rec.file}, {"lo", rec.lo}, {"hi", rec.hi}});
}

void add_table(Stage& st, const std::string& name) { st.tables.push_back(name); }

RunSummary finish(Stage& st, nlohmann::json&& extra, bool any_diverged) {
  nlohmann::json man;
  man["tool"] = "mwtomo";
  man["version"] = tool_version;
  man["config"] = config_to_json(st.cfg);
  man["grid"] = {{"nx", st.g.nx}, {"ny", st.g.ny}, {"nt", st.g.nt}, {"dx", st.g.dx}, {"dt", st.g.dt}};
  man["images"] = st.images;
  man["tables"] = st.tables;
  for (auto& item : extra.items()) man[item.key()] = std::move(item.value());

  RunSummary out;
  out.manifest_path = st.dir / (st.cfg.id + "-manifest.json");
  write_json(out.manifest_path, man);
  out.manifest = std::move(man);
  out.any_diverged = any_diverged;
  return out;
}

double final_rel_error(const IterationLog& log) {
  return log.empty() ? std::numeric_limits<double>::quiet_NaN() : log.back().rel_error;
}

}  // namespace

RunSummary run_phantom(const ExperimentConfig& cfg) {
  Stage st = prepare(cfg);
  add_image(st, cfg.id + "-phantom.pgm", st.f_true);
  add_image(st, cfg.id + "-speed.pgm", st.c);
  return finish(st, nlohmann::json::object(), false);
}

RunSummary run_forward(const ExperimentConfig& cfg) {
  Stage st = prepare(cfg);
  add_image(st, cfg.id + "-phantom.pgm", st.f_true);
  add_image(st, cfg.id + "-speed.pgm", st.c);
  const BoundaryTrace<double> m = synthesize_data(cfg, st.g, st.p, st.gamma, st.f_true);
  const std::string name = cfg.id + "-data.csv";
  write_trace_csv(st.dir / name, m, st.g, st.p);
  add_table(st, name);
  nlohmann::json extra{{"data", {{"file", name},
                                 {"min", m.values.minCoeff()},
                                 {"max", m.values.maxCoeff()}}}};
  return finish(st, std::move(extra), false);
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
  Stage st = prepare(cfg);
  add_image(st, cfg.id + "-phantom.pgm", st.f_true);
  add_image(st, cfg.id + "-speed.pgm", st.c);
  const BoundaryTrace<double> m = synthesize_data(cfg, st.g, st.p, st.gamma, st.f_true);

  nlohmann::json cells = nlohmann::json::array();
  bool any_diverged = false;

  if (cfg.method == MethodKind::Landweber) {
    const MeasurementConfig mc =
        measurement_config(st.g, st.p, st.gamma, cfg.chi_margin, cfg.time_weight);
    const OperatorPair<FieldXd, TraceXd> ops = wave_operator_pair(st.c, st.g, st.p, mc);

    const int n_cells = static_cast<int>(cfg.gammas.size());
    std::vector<LandweberResult<FieldXd>> results(static_cast<size_t>(n_cells));
    parallel_for(n_cells, std::min(cfg.threads, n_cells), [&](int i) {
      LandweberConfig lw;
      lw.gamma = cfg.gammas[static_cast<size_t>(i)];
      lw.max_steps = cfg.steps;
      lw.log_every = cfg.log_every;
      results[static_cast<size_t>(i)] = landweber_iterate(m.values, ops, lw, nullptr, &st.f_true);
    });

    std::vector<SweepRow> sweep;
    for (int i = 0; i < n_cells; ++i) {
      const double gm = cfg.gammas[static_cast<size_t>(i)];
      const LandweberResult<FieldXd>& r = results[static_cast<size_t>(i)];
      any_diverged = any_diverged || r.status == RunStatus::Diverged;

      const std::string tag = gamma_tag(gm);
      const std::string log_name = cfg.id + "-gamma" + tag + "-log.csv";
      write_iteration_csv(st.dir / log_name, r.log, r.status);
      add_table(st, log_name);
      const std::string img_name = cfg.id + "-gamma" + tag + "-recon.pgm";
      add_image(st, img_name, r.f);

      for (const IterationEntry& e : r.log)
        sweep.push_back({gm, e.step, std::log10(e.rel_error)});
      cells.push_back({{"method", "landweber"},
                       {"gamma", gm},
                       {"status", run_status_name(r.status)},
                       {"steps_done", r.steps_done},
                       {"final_rel_error", final_rel_error(r.log)},
                       {"log", log_name},
                       {"image", img_name}});
    }
    const std::string sweep_name = cfg.id + "-sweep.csv";
    write_sweep_csv(st.dir / sweep_name, sweep);
    add_table(st, sweep_name);
  } else {
    const AveragingSpec avg = cfg.atr.averaging == AveragingKind::Bump
                                  ? averaging_bump(st.g, cfg.atr.count, cfg.atr.lo_fraction)
                                  : averaging_ramp(st.g, cfg.atr.count, cfg.atr.lo_fraction,
                                                   cfg.atr.ramp_fraction);
    const InteriorBox box = interior_box(st.g, cfg.chi_margin);
    const AtrResult r = atr_iterate(m, cfg.steps, avg, box, st.c, st.g, st.p, cfg.atr.reversal, {},
                                    &st.f_true, cfg.threads);
    any_diverged = r.status == RunStatus::Diverged;

    const std::string log_name = cfg.id + "-atr-log.csv";
    write_iteration_csv(st.dir / log_name, r.log, r.status);
    add_table(st, log_name);
    const std::string img_name = cfg.id + "-atr-recon.pgm";
    add_image(st, img_name, r.f);
    cells.push_back({{"method", "atr"},
                     {"status", run_status_name(r.status)},
                     {"steps_done", r.steps_done},
                     {"final_rel_error", final_rel_error(r.log)},
                     {"log", log_name},
                     {"image", img_name}});
  }

  nlohmann::json extra{{"cells", std::move(cells)}};
  return finish(st, std::move(extra), any_diverged);
}

RunSummary run_spectrum(const ExperimentConfig& cfg) {
  Stage st = prepare(cfg);
  const InteriorBox box = interior_box(st.g, cfg.spectrum.margin);
  const MeasurementConfig mc =
      measurement_config(st.g, st.p, st.gamma, cfg.spectrum.margin, cfg.time_weight, cfg.filter);

  const std::int64_t cols = box.count();
  const std::int64_t rows = cfg.spectrum.kind == OperatorKind::NormalTranspose
                                ? static_cast<std::int64_t>(st.g.nt + 1) * st.p.n()
                                : cols;
  const std::int64_t bytes = 8 * (rows * cols + 2 * cols * cols);
  if (bytes > cfg.spectrum.max_bytes)
    throw ValidationError("config: spectral assembly would need " + std::to_string(bytes) +
                          " bytes, above spectrum.max_bytes");

  SpectralReportXd rep;
  nlohmann::json spec_info;
  if (cfg.spectrum.kind == OperatorKind::NormalTranspose) {
    std::function<FieldXd(const FieldXd&)> Lop = [&](const FieldXd& f) {
      return FieldXd(apply_L(f, st.c, st.g, st.p, mc).values);
    };
    const AssembledXd L = assemble(Lop, OperatorKind::Measurement, box, st.g, cfg.threads);
    rep = eigendecompose(normal_from_measurement(L));

    const Eigen::ArrayXd power = power_spectrum(st.f_true, rep);
    const std::string power_name = cfg.id + "-power.csv";
    write_power_csv(st.dir / power_name, rep, power);
    add_table(st, power_name);
    spec_info["phantom_power_total"] = power.sum();

    const Eigen::Index n = rep.eigenvalues.size();
    const Eigen::Index shown = std::min<Eigen::Index>(cfg.spectrum.image_count, n / 2);
    for (Eigen::Index k = 0; k < shown; ++k) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s-eig%04ld.pgm", cfg.id.c_str(), static_cast<long>(k));
      add_image(st, name, box_image<double>(rep.eigenvectors.col(k), box));
      std::snprintf(name, sizeof(name), "%s-eig%04ld.pgm", cfg.id.c_str(), static_cast<long>(n - 1 - k));
      add_image(st, name, box_image<double>(rep.eigenvectors.col(n - 1 - k), box));
    }
    if (rep.near_zero_count > 0)
      spec_info["tail_mean_high_freq"] = mean_high_freq_fraction(rep, 0, rep.near_zero_count);
  } else {
    std::function<FieldXd(const FieldXd&)> Nop = [&](const FieldXd& f) {
      return apply_normal(f, st.c, st.g, st.p, mc);
    };
    const AssembledXd Nw = assemble(Nop, cfg.spectrum.kind, box, st.g, cfg.threads);
    spec_info["symmetry_defect"] = (Nw.matrix - Nw.matrix.transpose()).norm() / Nw.matrix.norm();
    rep = eigendecompose(Nw);
    spec_info["max_im_over_re"] =
        rep.eigenvalues_im.abs().maxCoeff() / rep.eigenvalues.abs().maxCoeff();
  }

  const std::string eig_name = cfg.id + "-eigenvalues.csv";
  write_eigenvalue_csv(st.dir / eig_name, rep);
  add_table(st, eig_name);

  spec_info["kind"] = operator_kind_name(rep.kind);
  spec_info["margin"] = cfg.spectrum.margin;
  spec_info["dimension"] = rep.eigenvalues.size();
  spec_info["lambda_min"] = rep.lambda_min;
  spec_info["lambda_max"] = rep.lambda_max;
  spec_info["near_zero_count"] = rep.near_zero_count;

  nlohmann::json extra{{"spectrum", std::move(spec_info)}};
  return finish(st, std::move(extra), false);
}

}  // namespace mwt
