// Command-line front end for the six-level emitter toolkit: simulate
// the canned experiments, generate noisy synthetic datasets, run the
// joint rate fit over a dataset manifest and tabulate entangled-photon
// fidelity budgets.
//
// Exit codes: 0 success, 2 configuration error, 3 simulation failure,
// 4 fit infeasibility.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "vsi/fit.hpp"
#include "vsi/protocol.hpp"
#include "vsi/svg.hpp"

namespace {

vsi::ModelParams load_model_or_default(const std::string& path) {
  if (path.empty()) return vsi::ModelParams::table_defaults();
  return vsi::load_model(path);
}

vsi::Transition parse_transition(const std::string& s) {
  if (s == "O1") return vsi::Transition::o1;
  if (s == "O2") return vsi::Transition::o2;
  throw vsi::ConfigError("unknown transition '" + s + "' (expected O1 or O2)");
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(text);
  while (std::getline(ss, cur, ',')) {
    std::size_t a = cur.find_first_not_of(" \t");
    std::size_t b = cur.find_last_not_of(" \t");
    out.push_back(a == std::string::npos ? std::string() : cur.substr(a, b - a + 1));
  }
  return out;
}

std::string unit_suffix(const std::string& token) {
  std::size_t i = token.size();
  while (i > 0 && std::isalpha(static_cast<unsigned char>(token[i - 1]))) --i;
  return token.substr(i);
}

// comma list of times; a unit suffix on the last entry applies to the
// entries written as bare numbers, bare lists default to ns
std::vector<double> parse_time_list(const std::string& text) {
  auto tokens = split_csv(text);
  if (tokens.empty()) throw vsi::ConfigError("empty time list");
  std::string shared = unit_suffix(tokens.back());
  std::vector<double> out;
  for (const auto& t : tokens) {
    if (t.empty()) throw vsi::ConfigError("empty entry in time list '" + text + "'");
    out.push_back(vsi::parse_duration_ns(unit_suffix(t).empty() ? t + shared : t));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  auto tokens = split_csv(text);
  if (tokens.empty()) throw vsi::ConfigError(std::string("empty ") + what + " list");
  std::vector<double> out;
  for (const auto& t : tokens) {
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
      throw vsi::ConfigError(std::string("bad ") + what + " '" + t + "'");
    vsi::require_finite(v, what);
    out.push_back(v);
  }
  return out;
}

std::pair<int, int> parse_photon_range(const std::string& text) {
  auto as_int = [&](const std::string& s) {
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size())
      throw vsi::ConfigError("bad photon count '" + s + "' in range '" + text + "'");
    return int(v);
  };
  std::size_t dots = text.find("..");
  int a, b;
  if (dots == std::string::npos) {
    a = b = as_int(text);
  } else {
    a = as_int(text.substr(0, dots));
    b = as_int(text.substr(dots + 2));
  }
  if (a < 1 || b < a || b > 64)
    throw vsi::ConfigError("photon range '" + text + "' must be N or A..B with 1 <= A <= B <= 64");
  return {a, b};
}

std::string sibling_svg_path(const std::string& csv_path) {
  return (std::filesystem::path(csv_path).replace_extension(".svg")).string();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw vsi::ConfigError("cannot write '" + path + "'");
  out << content;
}

void print_trace_csv(const vsi::ExperimentTrace& tr) {
  std::cout << "time_ns,signal\n";
  for (std::size_t i = 0; i < tr.time_ns.size(); ++i)
    std::cout << vsi::fmt_g9(tr.time_ns[i]) << "," << vsi::fmt_g9(tr.signal[i]) << "\n";
}

void print_delayed_csv(const vsi::DelayedPulseData& d) {
  std::cout << "delay_ns,counts_o1,counts_o2\n";
  for (std::size_t i = 0; i < d.delay_ns.size(); ++i)
    std::cout << vsi::fmt_g9(d.delay_ns[i]) << "," << vsi::fmt_g9(d.counts_o1[i]) << ","
              << vsi::fmt_g9(d.counts_o2[i]) << "\n";
}

struct SimulateOpts {
  std::string model, experiment, transition = "O1";
  std::string duration, bin, delays, sequence_file, out;
  double power_nW = 20.0;
  double repump_power_nW = vsi::prep_power_nW;
  bool plot = false;
};

struct SynthOpts {
  std::string model, out_dir, powers = "6,10,15,20", transition = "O1";
  std::string duration = "30us", bin = "20ns";
  std::string delays = "0,150,400,800,1500,2500,4000,6000,8000,10000";
  double peak_counts = 1e4;
  std::uint64_t seed = 42;
};

struct FitOpts {
  std::string manifest, out_dir;
  int generations = vsi::DeOptions{}.max_generations;
  int stall = vsi::DeOptions{}.stall_generations;
  int pop_factor = vsi::DeOptions{}.pop_factor;
};

struct ProtocolOpts {
  std::string model, range = "1..3", gate = "ghz", out;
  bool optimize = false, min_purcell = false, plot = false;
  double target = 0.5;
  double splitting_GHz = 1.0;
  double debye_waller = 0.09;
  double dephasing_per_ns = 0.0;
};

void maybe_plot_trace(const SimulateOpts& o, const vsi::ExperimentTrace& tr,
                      const std::string& y_label, const std::string& label) {
  if (!o.plot) return;
  if (o.out.empty()) throw vsi::ConfigError("--plot needs --out to name the SVG");
  vsi::svg::PlotSpec spec;
  spec.title = o.experiment;
  spec.x_label = "time (ns)";
  spec.y_label = y_label;
  write_text(sibling_svg_path(o.out), vsi::svg::line_plot(spec, {{label, tr.time_ns, tr.signal}}));
}

int run_simulate(const SimulateOpts& o) {
  vsi::ModelParams m = load_model_or_default(o.model);
  vsi::Transition tr = parse_transition(o.transition);
  const char* trn = tr == vsi::Transition::o1 ? "O1" : "O2";

  if (o.experiment == "resonant-decay") {
    double duration = o.duration.empty() ? 30e3 : vsi::parse_duration_ns(o.duration);
    double bin = o.bin.empty() ? 20.0 : vsi::parse_duration_ns(o.bin);
    vsi::ExperimentTrace trace = vsi::simulate_resonant_decay(m, o.power_nW, tr, duration, bin);
    if (o.out.empty()) {
      print_trace_csv(trace);
    } else {
      vsi::write_trace_csv(o.out, trace);
      vsi::write_trace_meta(o.out, {"resonant-decay", o.power_nW, trn, 0, 0.0});
      std::cout << "wrote " << o.out << "\n";
    }
    maybe_plot_trace(o, trace, "photoluminescence", trn);
    return 0;
  }

  if (o.experiment == "delayed-pulse") {
    std::vector<double> delays =
        parse_time_list(o.delays.empty() ? "0,150,400,800,1500,2500,4000,6000,8000,10000"
                                         : o.delays);
    vsi::DelayedPulseData d = vsi::simulate_delayed_pulse(m, delays);
    if (o.out.empty()) {
      print_delayed_csv(d);
    } else {
      vsi::write_delayed_csv(o.out, d);
      vsi::write_trace_meta(o.out, {"delayed-pulse", vsi::delayed_readout_power_nW, "both", 0, 0.0});
      std::cout << "wrote " << o.out << "\n";
    }
    if (o.plot) {
      if (o.out.empty()) throw vsi::ConfigError("--plot needs --out to name the SVG");
      vsi::svg::PlotSpec spec;
      spec.title = "delayed-pulse readout";
      spec.x_label = "delay (ns)";
      spec.y_label = "integrated counts";
      write_text(sibling_svg_path(o.out),
                 vsi::svg::line_plot(spec, {{"O1", d.delay_ns, d.counts_o1},
                                            {"O2", d.delay_ns, d.counts_o2}}));
    }
    return 0;
  }

  if (o.experiment == "repump-contrast") {
    std::vector<double> times =
        parse_time_list(o.delays.empty() ? "0,200,500,1000,2000,5000,10000,20000,50000"
                                         : o.delays);
    std::vector<double> contrast =
        vsi::simulate_repump_contrast(m, times, tr, o.repump_power_nW);
    vsi::ExperimentTrace trace{times, contrast};
    if (o.out.empty())
      print_trace_csv(trace);
    else {
      vsi::write_trace_csv(o.out, trace);
      std::cout << "wrote " << o.out << "\n";
    }
    maybe_plot_trace(o, trace, "ground-state contrast", std::string(trn) + "-initialized");
    return 0;
  }

  if (o.experiment == "spin-pumping") {
    double duration = o.duration.empty() ? 20e3 : vsi::parse_duration_ns(o.duration);
    auto [ph, pt] = vsi::simulate_spin_pumping(m, duration, o.power_nW, tr);
    std::printf("ground-state weights after %s ns driving %s at %s nW:\n",
                vsi::fmt_g9(duration).c_str(), trn, vsi::fmt_g9(o.power_nW).c_str());
    std::printf("p_half = %.6f\np_three_half = %.6f\n", ph, pt);
    if (!o.out.empty()) {
      vsi::ExperimentTrace sweep;
      int steps = duration > 0 ? 100 : 0;
      for (int k = 0; k <= steps; ++k) {
        double t = duration * double(k) / std::max(1, steps);
        sweep.time_ns.push_back(t);
        sweep.signal.push_back(vsi::simulate_spin_pumping(m, t, o.power_nW, tr).first);
      }
      vsi::write_trace_csv(o.out, sweep);
      std::cout << "wrote " << o.out << "\n";
      maybe_plot_trace(o, sweep, "p_half", trn);
    } else if (o.plot) {
      throw vsi::ConfigError("--plot needs --out to name the SVG");
    }
    return 0;
  }

  if (o.experiment == "es-lifetime") {
    double record = o.duration.empty() ? 60.0 : vsi::parse_duration_ns(o.duration);
    double bin = o.bin.empty() ? 0.5 : vsi::parse_duration_ns(o.bin);
    vsi::PulseSequence seq = vsi::es_lifetime_sequence(tr, 1.5, record, bin);
    vsi::Mat6 rho0 = vsi::Mat6::Zero();
    rho0(vsi::gs_half, vsi::gs_half) = 0.5;
    rho0(vsi::gs_three_half, vsi::gs_three_half) = 0.5;
    vsi::SequenceResult res = vsi::run_sequence(m, seq, rho0);
    vsi::ExponentialFit fit = vsi::fit_single_exponential(res.trace.time_ns, res.trace.signal);
    std::printf("excited-state lifetime (%s): %.4f ns\n", trn, fit.tau_ns);
    if (!o.out.empty()) {
      vsi::write_trace_csv(o.out, res.trace);
      std::cout << "wrote " << o.out << "\n";
    }
    maybe_plot_trace(o, res.trace, "photoluminescence", trn);
    return 0;
  }

  if (o.experiment == "sequence") {
    if (o.sequence_file.empty())
      throw vsi::ConfigError("simulate --experiment sequence needs --sequence-file");
    vsi::PulseSequence seq = vsi::load_sequence(o.sequence_file);
    vsi::Mat6 rho0 = vsi::Mat6::Zero();
    rho0(vsi::gs_half, vsi::gs_half) = 0.5;
    rho0(vsi::gs_three_half, vsi::gs_three_half) = 0.5;
    vsi::SequenceResult res = vsi::run_sequence(m, seq, rho0);
    std::printf("final populations:");
    for (int i = 0; i < 6; ++i) std::printf(" %.6f", res.final_state(i, i).real());
    std::printf("\n");
    if (!o.out.empty()) {
      vsi::write_trace_csv(o.out, res.trace);
      std::cout << "wrote " << o.out << "\n";
    }
    if (!res.trace.time_ns.empty())
      maybe_plot_trace(o, res.trace, "photoluminescence", "recorded signal");
    return 0;
  }

  throw vsi::ConfigError("unknown experiment '" + o.experiment +
                         "' (expected resonant-decay, delayed-pulse, repump-contrast, "
                         "spin-pumping, es-lifetime or sequence)");
}

int run_synth(const SynthOpts& o) {
  if (!(o.peak_counts > 0))
    throw vsi::ConfigError("peak counts must be positive (synthetic data carries shot noise)");
  vsi::ModelParams truth = load_model_or_default(o.model);
  vsi::SynthSpec spec;
  spec.powers_nW = parse_double_list(o.powers, "power");
  spec.decay_transition = parse_transition(o.transition);
  spec.duration_ns = vsi::parse_duration_ns(o.duration);
  spec.bin_ns = vsi::parse_duration_ns(o.bin);
  spec.delays_ns = parse_time_list(o.delays);
  spec.seed = o.seed;
  spec.peak_counts = o.peak_counts;
  std::string manifest = vsi::write_synthetic_datasets(o.out_dir, truth, spec);
  std::cout << "wrote " << spec.powers_nW.size() << " decay datasets + delayed-pulse under "
            << o.out_dir << "\n";
  std::cout << "manifest: " << manifest << "\n";
  return 0;
}

int run_fit(const FitOpts& o) {
  vsi::FitProblem p = vsi::load_fit_problem(o.manifest);
  vsi::JointFitOptions jo;
  jo.de.max_generations = o.generations;
  jo.de.stall_generations = o.stall;
  jo.de.pop_factor = o.pop_factor;
  vsi::FitOutcome fo = vsi::joint_fit(p, jo);
  auto files = vsi::write_fit_reports(o.out_dir, p, fo);

  auto line = [](const char* label, double life_ns) {
    std::printf("  %-26s %12.4f\n", label, life_ns);
  };
  const vsi::RateSet& r = fo.model.rates;
  std::printf("recovered lifetimes (ns)\n");
  line("radiative (both lines)", 1.0 / r.gamma_r);
  line("es_half -> ms1", 1.0 / r.gamma_1);
  line("es_three_half -> ms1", 1.0 / r.gamma_1p);
  line("es_half -> ms2", 1.0 / r.gamma_2);
  line("es_three_half -> ms2", 1.0 / r.gamma_2p);
  line("ms1 -> gs_half", 1.0 / r.gamma_3);
  line("ms1 -> gs_three_half", 1.0 / r.gamma_4);
  line("ms2 exit, intrinsic", 1.0 / r.gamma_3p);
  for (const auto& row : fo.model.ms2_power_overrides) {
    char label[48];
    std::snprintf(label, sizeof label, "ms2 exit at %g nW", row.power_nW);
    line(label, row.lifetime_ns);
  }
  std::printf("readout lifetimes: tau_O1 = %.4f ns, tau_O2 = %.4f ns\n", fo.tau_o1_ns,
              fo.tau_o2_ns);
  std::printf("datasets:\n");
  for (const auto& d : fo.datasets)
    std::printf("  %-18s scale %12.6g   rms %10.4g   %ld points\n", d.id.c_str(), d.scale,
                d.rms, d.points);
  std::printf("loss %.6g (null %.6g), %ld evaluations, seed %llu\n", fo.loss, fo.null_loss,
              fo.evaluations, static_cast<unsigned long long>(fo.seed));
  for (const auto& f : files) std::printf("wrote %s\n", f.c_str());

  if (fo.underdetermined) std::printf("warning: %s\n", fo.underdetermined_note.c_str());
  if (!fo.weakly_constrained.empty()) {
    std::printf("warning: weakly constrained:");
    for (const auto& n : fo.weakly_constrained) std::printf(" %s", n.c_str());
    std::printf("\n");
  }
  if (!fo.constraints_satisfied) {
    std::fprintf(stderr,
                 "error: fitted lifetimes violate the readout constraints "
                 "(tau_O1 %.4f vs %.4f, tau_O2 %.4f vs %.4f)\n",
                 fo.tau_o1_ns, p.constraints.tau_o1_ns, fo.tau_o2_ns, p.constraints.tau_o2_ns);
    return 4;
  }
  return 0;
}

int run_protocol(const ProtocolOpts& o) {
  if (o.optimize == o.min_purcell)
    throw vsi::ConfigError("choose exactly one of --optimize and --min-purcell");
  vsi::ModelParams m = load_model_or_default(o.model);
  vsi::ProtocolConfig c;
  c.rates = m.rates;
  c.splitting_rad_ns = 2.0 * vsi::pi * o.splitting_GHz;
  c.debye_waller = o.debye_waller;
  c.dephasing_rate = o.dephasing_per_ns;
  c.final_gate = vsi::gate_from_name(o.gate);
  auto [n_lo, n_hi] = parse_photon_range(o.range);

  std::string csv = "N,purcell,F_p,F_ex,F_br,F_t\n";
  std::vector<std::string> categories;
  vsi::svg::BarSeries phonon{"phonon", {}}, excitation{"excitation", {}},
      branching{"branching", {}}, total{"total", {}};
  for (int n = n_lo; n <= n_hi; ++n) {
    c.photons = n;
    double purcell;
    vsi::FidelityBudget b;
    if (o.optimize) {
      vsi::PurcellOptimum opt = vsi::optimize_purcell(c);
      purcell = opt.purcell;
      b = opt.budget;
    } else {
      vsi::PurcellRequirement req = vsi::min_purcell(c, o.target);
      purcell = req.feasible ? req.purcell : std::numeric_limits<double>::infinity();
      b = req.budget;
    }
    csv += std::to_string(n) + "," +
           (std::isinf(purcell) ? std::string("inf") : vsi::fmt_g9(purcell)) + "," +
           vsi::fmt_g9(b.phonon) + "," + vsi::fmt_g9(b.excitation) + "," +
           vsi::fmt_g9(b.branching) + "," + vsi::fmt_g9(b.total) + "\n";
    categories.push_back(std::to_string(n));
    phonon.values.push_back(b.phonon);
    excitation.values.push_back(b.excitation);
    branching.values.push_back(b.branching);
    total.values.push_back(b.total);
  }

  if (o.out.empty()) {
    std::cout << csv;
  } else {
    write_text(o.out, csv);
    std::cout << "wrote " << o.out << "\n";
  }
  if (o.plot) {
    if (o.out.empty()) throw vsi::ConfigError("--plot needs --out to name the SVG");
    vsi::svg::PlotSpec spec;
    spec.title = o.optimize ? "fidelity budget at the optimal enhancement"
                            : "fidelity budget at the minimal enhancement";
    spec.x_label = "photons per state";
    spec.y_label = "fidelity factor";
    write_text(sibling_svg_path(o.out),
               vsi::svg::bar_chart(spec, categories, {phonon, excitation, branching, total}));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"six-level emitter toolkit: rate-model simulation, fitting and planning"};
  app.require_subcommand(1);

  SimulateOpts so;
  CLI::App* sim = app.add_subcommand("simulate", "run one canned experiment deterministically");
  sim->add_option("--model", so.model, "model JSON (defaults to the built-in table values)");
  sim->add_option("--experiment", so.experiment,
                  "resonant-decay | delayed-pulse | repump-contrast | spin-pumping | "
                  "es-lifetime | sequence")
      ->required();
  sim->add_option("--transition", so.transition, "driven line, O1 or O2")
      ->capture_default_str();
  sim->add_option("--power", so.power_nW, "resonant drive power in nW")->capture_default_str();
  sim->add_option("--repump-power", so.repump_power_nW,
                  "off-resonant repump power in nW (repump-contrast)")
      ->capture_default_str();
  sim->add_option("--duration", so.duration,
                  "drive / record span with ns, us or ms suffix (experiment-specific default)");
  sim->add_option("--bin", so.bin, "readout bin width with unit suffix");
  sim->add_option("--delays", so.delays,
                  "comma list of time points; a unit suffix on the last entry applies to bare "
                  "entries");
  sim->add_option("--sequence-file", so.sequence_file, "pulse sequence JSON for --experiment "
                  "sequence");
  sim->add_option("--out", so.out, "output CSV path (stdout when omitted)");
  sim->add_flag("--plot", so.plot, "write an SVG line plot next to --out");

  SynthOpts yo;
  CLI::App* synth = app.add_subcommand("synth", "generate noisy synthetic datasets + manifest");
  synth->add_option("--model", yo.model, "truth model JSON (defaults to the built-in table "
                    "values)");
  synth->add_option("--out-dir", yo.out_dir, "directory for the CSVs and manifest")->required();
  synth->add_option("--powers", yo.powers, "comma list of decay readout powers in nW")
      ->capture_default_str();
  synth->add_option("--transition", yo.transition, "decay readout line")->capture_default_str();
  synth->add_option("--duration", yo.duration, "decay record span")->capture_default_str();
  synth->add_option("--bin", yo.bin, "decay bin width")->capture_default_str();
  synth->add_option("--delays", yo.delays, "delayed-pulse delay list (ns unless suffixed)")
      ->capture_default_str();
  synth->add_option("--peak-counts", yo.peak_counts, "Poisson peak counts, must be positive")
      ->capture_default_str();
  synth->add_option("--seed", yo.seed, "noise seed")->capture_default_str();

  FitOpts fo;
  CLI::App* fit = app.add_subcommand("fit", "joint rate fit over a dataset manifest");
  fit->add_option("--manifest", fo.manifest, "manifest JSON written by synth or by hand")
      ->required();
  fit->add_option("--out-dir", fo.out_dir, "directory for rates.json, diagnostics and residuals")
      ->required();
  fit->add_option("--generations", fo.generations, "evolution generation cap")
      ->capture_default_str();
  fit->add_option("--stall", fo.stall, "stop after this many generations without improvement")
      ->capture_default_str();
  fit->add_option("--pop-factor", fo.pop_factor, "population size per search dimension")
      ->capture_default_str();

  ProtocolOpts po;
  CLI::App* proto = app.add_subcommand("protocol", "entangled-photon fidelity budgets");
  proto->add_option("--model,--rates", po.model, "model JSON giving the rate set (defaults to "
                    "the built-in table values)");
  proto->add_option("--n", po.range, "photon count or range A..B")->capture_default_str();
  proto->add_flag("--optimize", po.optimize, "report the enhancement maximizing total fidelity");
  proto->add_flag("--min-purcell", po.min_purcell,
                  "report the smallest enhancement reaching --target");
  proto->add_option("--target", po.target, "total fidelity target in (0, 1) for --min-purcell")
      ->capture_default_str();
  proto->add_option("--splitting-ghz", po.splitting_GHz, "ground-state line splitting in GHz")
      ->capture_default_str();
  proto->add_option("--debye-waller", po.debye_waller, "sharp-line emission fraction")
      ->capture_default_str();
  proto->add_option("--dephasing", po.dephasing_per_ns, "optical dephasing rate per ns")
      ->capture_default_str();
  proto->add_option("--gate", po.gate, "per-period recoupling gate: ghz (X) or cluster (H)")
      ->capture_default_str();
  proto->add_option("--out", po.out, "budget CSV path (stdout when omitted)");
  proto->add_flag("--plot", po.plot, "write an SVG bar chart next to --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return run_simulate(so);
    if (synth->parsed()) return run_synth(yo);
    if (fit->parsed()) return run_fit(fo);
    if (proto->parsed()) return run_protocol(po);
  } catch (const vsi::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vsi::NonPositiveRate& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vsi::AsymmetricMs2Rates& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vsi::NonMonotonicRates& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vsi::InsufficientSpan& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vsi::FitDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const vsi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
