// mixlim command-line driver: simulations, Mach sweeps, property audits.
//
// Exit codes: 0 success, 1 configuration error, 2 solver blow-up,
// 3 property-audit failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixlim/audit.hpp"
#include "mixlim/config.hpp"
#include "mixlim/csvio.hpp"
#include "mixlim/diagnostics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace mixlim;

std::vector<std::string> snapshot_columns(int N) {
  std::vector<std::string> cols = {"x", "t"};
  for (int i = 1; i <= N; ++i) cols.push_back("rho_" + std::to_string(i));
  cols.push_back("v");
  cols.push_back("p");
  for (int i = 1; i <= N; ++i) cols.push_back("mu_" + std::to_string(i));
  return cols;
}

void write_snapshots(const fs::path& dir, const RunConfig& cfg,
                     const RunResult& rr) {
  fs::create_directories(dir);
  const int N = cfg.spec.N;
  for (std::size_t s = 0; s < rr.snaps.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "snapshot_%04zu.csv", s);
    CsvWriter csv((dir / name).string(), snapshot_columns(N));
    const Snapshot& snap = rr.snaps[s];
    for (int j = 0; j < cfg.grid.n; ++j) {
      std::vector<double> row = {cfg.grid.x_center(j), snap.t};
      for (int i = 0; i < N; ++i) row.push_back(snap.rho[j][i]);
      row.push_back(snap.v[j]);
      row.push_back(snap.p[j]);
      for (int i = 0; i < N; ++i) row.push_back(snap.mu[j][i]);
      csv.row(row);
    }
  }
  CsvWriter energy((dir / "energy.csv").string(),
                   {"t", "E_tot", "D_visc_cum", "D_diff_cum", "work_cum",
                    "residual"});
  for (const EnergyRow& row : rr.energy)
    energy.row({row.t, row.E_tot, row.D_visc_cum, row.D_diff_cum, row.work_cum,
                row.residual});
}

// least-squares slope of ln(y) against ln(m); failed/zero rows are skipped
double loglog_slope(const std::vector<StudyMember>& members,
                    double StudyMember::*field) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int np = 0;
  for (const StudyMember& sm : members) {
    if (sm.failed) continue;
    const double y = sm.*field;
    if (!(y > 0.0)) continue;
    const double lx = std::log(sm.m), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++np;
  }
  if (np < 2) return 0.0;
  return (np * sxy - sx * sy) / (np * sxx - sx * sx);
}

int cmd_simulate(const std::string& config_path, const std::string& model,
                 double m_flag, const std::string& out_dir) {
  ConfigFile cfg = load_config(config_path);
  RunConfig rc = cfg.run_config(
      model == "incompressible"
          ? std::numeric_limits<double>::infinity()
          : (m_flag > 0.0 ? m_flag
                          : (cfg.m_list.empty() ? 100.0 : cfg.m_list.front())));
  rc.validate();
  const RunResult rr = run(rc);
  write_snapshots(out_dir, rc, rr);
  std::cerr << "simulate: " << rr.steps << " steps, " << rr.snaps.size()
            << " snapshots";
  if (rr.clip_count > 0)
    std::cerr << "  [flagged: " << rr.clip_count << " density clips]";
  std::cerr << "\n";
  return 0;
}

int cmd_limit_study(const std::string& config_path, const std::string& out_dir,
                    int threads, bool deep) {
  ConfigFile cfg = load_config(config_path);
  if (cfg.m_list.empty()) {
    std::cerr << "error: limit-study requires a non-empty study.m_list\n";
    return 1;
  }
  RunConfig base = cfg.run_config(cfg.m_list.front());
  base.validate();
  const StudyResult sr = limit_study(base, cfg.m_list, threads);

  fs::create_directories(out_dir);
  write_snapshots(fs::path(out_dir) / "ref", base, sr.reference);
  for (std::size_t k = 0; k < sr.members.size(); ++k) {
    if (sr.members[k].failed) continue;
    RunConfig mc = base;
    mc.m = sr.members[k].m;
    write_snapshots(fs::path(out_dir) / ("m_" + format_double(sr.members[k].m)),
                    mc, sr.member_runs[k]);
    if (deep) {
      const auto rows = deep_audit(mc, sr.member_runs[k], sr.reference);
      CsvWriter audit_csv((fs::path(out_dir) /
                           ("deep_audit_m_" + format_double(sr.members[k].m) + ".csv"))
                              .string(),
                          {"t", "lhs", "rhs", "residual", "E_rel", "R1", "R2", "R3",
                           "R4", "coupling_rate", "phi_min", "phi_max", "omega_max",
                           "meas_omega_ab", "meas_B_s0"});
      for (const DeepAuditRow& r : rows)
        audit_csv.row({r.t, r.lhs, r.rhs, r.residual, r.E_rel, r.R1, r.R2, r.R3,
                       r.R4, r.coupling_rate, r.phi_min, r.phi_max, r.omega_max,
                       r.meas_omega_ab, r.meas_B_s0});
    }
  }

  CsvWriter study((fs::path(out_dir) / "study.csv").string(),
                  {"m", "sup_relative_energy", "visc_dissipation_gap",
                   "diff_dissipation_gap", "constraint_L1inf", "pressure_L1_gap",
                   "steps", "wall_time_s", "clip_count"});
  int ok_members = 0;
  for (const StudyMember& sm : sr.members) {
    if (sm.failed) {
      study.raw_row({format_double(sm.m), "failed", "failed", "failed", "failed",
                     "failed", "0", format_double(sm.wall_time_s), "0"});
      continue;
    }
    ++ok_members;
    study.raw_row({format_double(sm.m), format_double(sm.sup_relative_energy),
                   format_double(sm.visc_dissipation_gap),
                   format_double(sm.diff_dissipation_gap),
                   format_double(sm.constraint_L1inf),
                   format_double(sm.pressure_L1_gap), std::to_string(sm.steps),
                   format_double(sm.wall_time_s), std::to_string(sm.clip_count)});
  }

  json summary;
  summary["m_list"] = cfg.m_list;
  summary["reference_steps"] = sr.reference.steps;
  summary["slopes"] = {
      {"sup_relative_energy", loglog_slope(sr.members, &StudyMember::sup_relative_energy)},
      {"constraint_L1inf", loglog_slope(sr.members, &StudyMember::constraint_L1inf)},
      {"pressure_L1_gap", loglog_slope(sr.members, &StudyMember::pressure_L1_gap)},
      {"visc_dissipation_gap", loglog_slope(sr.members, &StudyMember::visc_dissipation_gap)},
      {"diff_dissipation_gap", loglog_slope(sr.members, &StudyMember::diff_dissipation_gap)}};
  json rows = json::array();
  for (const StudyMember& sm : sr.members) {
    json r;
    r["m"] = sm.m;
    r["failed"] = sm.failed;
    if (sm.failed) {
      r["error"] = sm.error;
    } else {
      r["sup_relative_energy"] = sm.sup_relative_energy;
      r["visc_dissipation_gap"] = sm.visc_dissipation_gap;
      r["diff_dissipation_gap"] = sm.diff_dissipation_gap;
      r["constraint_L1inf"] = sm.constraint_L1inf;
      r["pressure_L1_gap"] = sm.pressure_L1_gap;
      r["steps"] = sm.steps;
      r["clip_count"] = sm.clip_count;
    }
    rows.push_back(r);
  }
  summary["members"] = rows;
  summary["reference"] = {{"constraint_resid_max", sr.reference.constraint_resid_max},
                          {"gauge_resid_max", sr.reference.gauge_resid_max},
                          {"div_closure_resid_max", sr.reference.div_closure_resid_max}};
  std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << "\n";

  std::cerr << "limit-study: reference + " << ok_members << "/" << sr.members.size()
            << " members succeeded\n";
  return ok_members >= 1 ? 0 : 2;
}

int cmd_thermo_check(const std::string& config_path, long samples,
                     std::uint64_t seed, bool negative_control,
                     const std::string& report_path) {
  ConfigFile cfg = load_config(config_path);
  MixtureSpec spec = cfg.mixture;
  if (negative_control) spec.gkind = GKind::BrokenNonconcave;

  AuditReport rep = thermo_audit(spec, samples, seed);
  if (rep.all_pass) {
    const AuditReport tr = transform_audit(spec, std::max<long>(64, samples / 10), seed);
    for (const AuditCheck& c : tr.checks) rep.add(c);
    const AuditReport mr = mobility_audit(spec, std::max<long>(64, samples / 10), seed);
    for (const AuditCheck& c : mr.checks) rep.add(c);
  }
  const std::string text = format_report(rep);
  std::cout << text;
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << text;
  }
  return rep.all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isothermal multicomponent mixture solver and low-Mach study"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", model = "compressible";
  std::string report_path;
  double m_flag = 0.0;
  int threads = 1;
  long samples = 10000;
  std::uint64_t seed = 1;
  bool negative_control = false, deep = false;

  CLI::App* sim = app.add_subcommand("simulate", "run one solver and dump CSVs");
  sim->add_option("config", config_path, "JSON config file")->required();
  sim->add_option("--model", model, "compressible|incompressible")
      ->check(CLI::IsMember({"compressible", "incompressible"}));
  sim->add_option("--m", m_flag, "rescaling index for the compressible model");
  sim->add_option("--out", out_dir, "output directory");

  CLI::App* study = app.add_subcommand("limit-study", "incompressible-limit sweep");
  study->add_option("config", config_path, "JSON config file")->required();
  study->add_option("--out", out_dir, "output directory");
  study->add_option("--threads", threads, "concurrent member runs")
      ->check(CLI::PositiveNumber);
  study->add_flag("--deep-audit", deep, "emit relative-energy inequality audit");

  CLI::App* check = app.add_subcommand("thermo-check", "property audit suite");
  check->add_option("config", config_path, "JSON config file")->required();
  check->add_option("--samples", samples, "number of sampled states");
  check->add_option("--seed", seed, "RNG seed (sole entropy source)");
  check->add_option("--report", report_path, "also write the report to a file");
  check->add_flag("--negative-control", negative_control,
                  "audit a deliberately broken family (must fail)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, model, m_flag, out_dir);
    if (study->parsed()) return cmd_limit_study(config_path, out_dir, threads, deep);
    if (check->parsed())
      return cmd_thermo_check(config_path, samples, seed, negative_control,
                              report_path);
  } catch (const mixlim::SolverBlowUp& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
