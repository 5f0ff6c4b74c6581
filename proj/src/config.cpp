#include "mixlim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mixlim {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& section,
                    const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + it.key() +
                                  "' in section '" + section + "'");
}

double require_number(const json& obj, const std::string& section,
                      const std::string& key) {
  if (!obj.contains(key))
    throw std::invalid_argument("config: missing key '" + key + "' in '" +
                                section + "'");
  if (!obj[key].is_number())
    throw std::invalid_argument("config: key '" + key + "' in '" + section +
                                "' must be a number");
  return obj[key].get<double>();
}

Vec require_array(const json& obj, const std::string& section,
                  const std::string& key, std::size_t len) {
  if (!obj.contains(key) || !obj[key].is_array())
    throw std::invalid_argument("config: key '" + key + "' in '" + section +
                                "' must be an array");
  Vec out;
  for (const auto& v : obj[key]) {
    if (!v.is_number())
      throw std::invalid_argument("config: array '" + key + "' must be numeric");
    out.push_back(v.get<double>());
  }
  if (len && out.size() != len)
    throw std::invalid_argument("config: array '" + key + "' must have length " +
                                std::to_string(len));
  return out;
}

}  // namespace

RescaleResult rescale_physical(const MixtureSpec& physical_spec,
                               const PhysicalRefs& refs) {
  if (!(refs.p_ref > 0.0 && refs.rho_ref > 0.0 && refs.v_ref > 0.0 &&
        refs.g_accel > 0.0))
    throw std::invalid_argument("rescale_physical: reference quantities must be positive");
  RescaleResult out;
  out.t_ref = refs.v_ref / refs.g_accel;
  out.L_ref = refs.v_ref * refs.v_ref / refs.g_accel;
  out.c_ref = std::sqrt(refs.p_ref / refs.rho_ref);
  out.Ma = refs.v_ref / out.c_ref;
  out.m = std::max(1.0, std::round(1.0 / (out.Ma * out.Ma)));
  out.subsonic = out.Ma < 1.0;
  out.rescaled = physical_spec;
  const double RT = physical_spec.RT;
  for (int i = 0; i < physical_spec.N; ++i) {
    out.rescaled.M[i] = physical_spec.M[i] * refs.v_ref * refs.v_ref / RT;
    out.rescaled.vbar[i] = refs.rho_ref * physical_spec.vbar[i];
  }
  out.rescaled.RT = 1.0;
  const double eta_ref = refs.rho_ref * refs.v_ref * out.L_ref;
  out.rescaled.eta_visc = physical_spec.eta_visc / eta_ref;
  out.rescaled.lambda_visc = physical_spec.lambda_visc / eta_ref;
  const double mob_ref = refs.rho_ref * out.t_ref;  // per unit temperature
  out.rescaled.d_ms = physical_spec.d_ms / mob_ref;
  out.rescaled.lambda0 = physical_spec.lambda0 / mob_ref;
  return out;
}

RunConfig ConfigFile::run_config(double m) const {
  RunConfig rc;
  rc.spec = mixture;
  rc.m = m;
  rc.mobility = mobility;
  rc.grid = grid;
  rc.t_end = t_end;
  rc.cfl = cfl;
  rc.body_force = body_force;
  rc.snapshot_every = snapshot_every;
  rc.initial = initial;
  return rc;
}

ConfigFile parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("config: root must be an object");
  reject_unknown(doc, "(root)",
                 {"mixture", "mobility", "grid", "time", "initial", "study",
                  "physical"});
  ConfigFile cfg;

  if (!doc.contains("mixture"))
    throw std::invalid_argument("config: missing 'mixture' section");
  {
    const json& mx = doc["mixture"];
    reject_unknown(mx, "mixture",
                   {"N", "M", "vbar", "alpha", "sbar", "eta_visc", "lambda_visc",
                    "RT"});
    const int N = (int)require_number(mx, "mixture", "N");
    cfg.mixture.N = N;
    cfg.mixture.M = require_array(mx, "mixture", "M", N);
    cfg.mixture.vbar = require_array(mx, "mixture", "vbar", N);
    cfg.mixture.alpha = require_array(mx, "mixture", "alpha", N);
    cfg.mixture.sbar = require_number(mx, "mixture", "sbar");
    cfg.mixture.eta_visc = require_number(mx, "mixture", "eta_visc");
    cfg.mixture.lambda_visc = require_number(mx, "mixture", "lambda_visc");
    cfg.mixture.RT = mx.contains("RT") ? require_number(mx, "mixture", "RT") : 1.0;
  }
  if (doc.contains("mobility")) {
    const json& mb = doc["mobility"];
    reject_unknown(mb, "mobility", {"variant", "lambda0", "d"});
    if (mb.contains("variant")) {
      const std::string v = mb["variant"].get<std::string>();
      if (v == "uniform")
        cfg.mobility.variant = MobilityVariant::UniformProjection;
      else if (v == "maxwell-stefan")
        cfg.mobility.variant = MobilityVariant::MaxwellStefanToy;
      else if (v == "sum")
        cfg.mobility.variant = MobilityVariant::Sum;
      else
        throw std::invalid_argument("config: mobility.variant must be one of "
                                    "'uniform', 'maxwell-stefan', 'sum'");
    }
    if (mb.contains("lambda0")) cfg.mobility.lambda0 = require_number(mb, "mobility", "lambda0");
    if (mb.contains("d")) cfg.mobility.d = require_number(mb, "mobility", "d");
    cfg.mixture.lambda0 = cfg.mobility.lambda0;
    cfg.mixture.d_ms = cfg.mobility.d;
  }
  if (!doc.contains("grid")) throw std::invalid_argument("config: missing 'grid' section");
  {
    const json& g = doc["grid"];
    reject_unknown(g, "grid", {"L", "n"});
    cfg.grid.L = require_number(g, "grid", "L");
    cfg.grid.n = (int)require_number(g, "grid", "n");
  }
  if (!doc.contains("time")) throw std::invalid_argument("config: missing 'time' section");
  {
    const json& t = doc["time"];
    reject_unknown(t, "time", {"t_end", "cfl", "snapshot_every", "body_force"});
    cfg.t_end = require_number(t, "time", "t_end");
    if (!(cfg.t_end > 0.0))
      throw std::invalid_argument("config: time.t_end must be positive");
    if (t.contains("cfl")) cfg.cfl = require_number(t, "time", "cfl");
    if (t.contains("snapshot_every"))
      cfg.snapshot_every = require_number(t, "time", "snapshot_every");
    if (t.contains("body_force"))
      cfg.body_force = require_number(t, "time", "body_force");
  }
  if (doc.contains("initial")) {
    const json& in = doc["initial"];
    reject_unknown(in, "initial", {"amplitude", "mode"});
    if (in.contains("amplitude"))
      cfg.initial.amplitude = require_number(in, "initial", "amplitude");
    if (in.contains("mode")) cfg.initial.mode = (int)require_number(in, "initial", "mode");
  }
  if (doc.contains("study")) {
    const json& st = doc["study"];
    reject_unknown(st, "study", {"m_list"});
    cfg.m_list = require_array(st, "study", "m_list", 0);
    for (double m : cfg.m_list)
      if (!(m > 0.0))
        throw std::invalid_argument("config: study.m_list entries must be positive");
  }
  if (doc.contains("physical")) {
    const json& ph = doc["physical"];
    reject_unknown(ph, "physical", {"p_ref", "rho_ref", "v_ref", "g_accel"});
    PhysicalRefs refs;
    refs.p_ref = require_number(ph, "physical", "p_ref");
    refs.rho_ref = require_number(ph, "physical", "rho_ref");
    refs.v_ref = require_number(ph, "physical", "v_ref");
    refs.g_accel = require_number(ph, "physical", "g_accel");
    cfg.physical = refs;
  }
  cfg.mixture.validate();
  cfg.grid.validate();
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 0.5))
    throw std::invalid_argument("config: time.cfl must lie in (0, 0.5]");
  return cfg;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ConfigFile& cfg) {
  json doc;
  doc["mixture"] = {
      {"N", cfg.mixture.N},       {"M", cfg.mixture.M},
      {"vbar", cfg.mixture.vbar}, {"alpha", cfg.mixture.alpha},
      {"sbar", cfg.mixture.sbar}, {"eta_visc", cfg.mixture.eta_visc},
      {"lambda_visc", cfg.mixture.lambda_visc}, {"RT", cfg.mixture.RT}};
  const char* variant = cfg.mobility.variant == MobilityVariant::UniformProjection
                            ? "uniform"
                            : cfg.mobility.variant == MobilityVariant::MaxwellStefanToy
                                  ? "maxwell-stefan"
                                  : "sum";
  doc["mobility"] = {{"variant", variant},
                     {"lambda0", cfg.mobility.lambda0},
                     {"d", cfg.mobility.d}};
  doc["grid"] = {{"L", cfg.grid.L}, {"n", cfg.grid.n}};
  doc["time"] = {{"t_end", cfg.t_end},
                 {"cfl", cfg.cfl},
                 {"snapshot_every", cfg.snapshot_every},
                 {"body_force", cfg.body_force}};
  doc["initial"] = {{"amplitude", cfg.initial.amplitude}, {"mode", cfg.initial.mode}};
  if (!cfg.m_list.empty()) doc["study"] = {{"m_list", cfg.m_list}};
  if (cfg.physical)
    doc["physical"] = {{"p_ref", cfg.physical->p_ref},
                       {"rho_ref", cfg.physical->rho_ref},
                       {"v_ref", cfg.physical->v_ref},
                       {"g_accel", cfg.physical->g_accel}};
  return doc.dump(2) + "\n";
}

}  // namespace mixlim
