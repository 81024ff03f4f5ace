// Command-line front end: mlf evaluation, simulation, certificates,
// verification, sweeps and the built-in demo scenarios.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mlfuzz/certify.hpp"
#include "mlfuzz/config.hpp"
#include "mlfuzz/demo_configs.hpp"
#include "mlfuzz/error.hpp"
#include "mlfuzz/harness.hpp"
#include "mlfuzz/io.hpp"
#include "mlfuzz/mlf.hpp"

namespace fs = std::filesystem;
using namespace mlfuzz;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Overrides {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> rtol, atol, step, horizon, q;
  std::optional<std::size_t> levels;
  unsigned workers = 1;

  void attach(CLI::App* app) {
    app->add_option("--out", out, "Output directory");
    app->add_option("--seed", seed, "Noise seed (overrides the config)");
    app->add_option("--rtol", rtol, "Relative tolerance of the envelope check")->check(CLI::NonNegativeNumber);
    app->add_option("--atol", atol, "Absolute tolerance of the envelope check")->check(CLI::NonNegativeNumber);
    app->add_option("--levels", levels, "Number of membership intervals");
    app->add_option("--step", step, "Step size h");
    app->add_option("--horizon", horizon, "Horizon T");
    app->add_option("--q", q, "Fractional order");
    app->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  }

  void apply(Config& c) const {
    if (seed) {
      if (!c.scenario.noise) throw DomainError("--seed needs a scenario with noise");
      c.scenario.noise->seed = *seed;
    }
    if (rtol) c.verify.rtol = *rtol;
    if (atol) c.verify.atol = *atol;
    if (levels) c.scenario.levels = *levels;
    if (step) c.scenario.step = *step;
    if (horizon) c.scenario.horizon = *horizon;
    if (q) c.scenario.q = *q;
    if (!out.empty()) c.output.dir = out;
    (void)c.scenario.build();
  }
};

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path.string(), 0, "cannot write output file");
  f << contents;
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError(dir, 0, "cannot create output directory: " + ec.message());
  return p;
}

std::string csv_of(const RunReport& rep) {
  std::ostringstream os;
  if (rep.trajectory) io::write_trajectory_csv(os, *rep.trajectory);
  if (rep.moments) io::write_moment_csv(os, *rep.moments);
  return os.str();
}

int emit_run(const Config& cfg, const RunReport& rep) {
  std::cout << rep.to_text();
  if (!cfg.output.dir.empty()) {
    const fs::path dir = ensure_dir(cfg.output.dir);
    write_file(dir / "report.txt", rep.to_text());
    write_file(dir / "report.json", rep.to_json());
    if (cfg.output.csv && (rep.trajectory || rep.moments)) {
      write_file(dir / (rep.moments ? "moments.csv" : "trajectory.csv"), csv_of(rep));
    }
  }
  return rep.status == RunStatus::Pass ? kExitPass : kExitFail;
}

Config demo_config(const std::string& name) {
  std::string key = name;
  for (char& c : key) {
    if (c == '-') c = '_';
  }
  for (const auto& [n, text] : demos::kEmbedded) {
    if (n == key) return parse_config(std::string(text), "configs/" + key + ".yaml");
  }
  std::string list;
  for (const auto& [n, text] : demos::kEmbedded) list += (list.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("", 0, "unknown demo '" + name + "' (available: " + list + ")");
}

Eigen::MatrixXd parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    for (char& c : row) {
      if (c == ',') c = ' ';
    }
    std::istringstream es(row);
    es.imbue(std::locale::classic());
    std::vector<double> r;
    double v;
    while (es >> v) r.push_back(v);
    if (!es.eof()) throw DomainError("malformed matrix entry in '" + text + "'");
    rows.push_back(r);
  }
  const std::size_t n = rows.size();
  if (n == 0) throw DomainError("empty matrix");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw DomainError("matrix must be square; rows are separated by ';'");
    for (std::size_t j = 0; j < n; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return A;
}

void print_envelope(const Envelope& env) {
  std::cout << "envelope.kind: " << to_string(env.kind) << '\n'
            << "envelope.q: " << io::format_double(env.q) << '\n'
            << "envelope.a: " << io::format_double(env.a) << '\n'
            << "envelope.M: " << io::format_double(env.M) << '\n'
            << "envelope.lambda: " << io::format_double(env.lambda) << '\n'
            << "envelope.offset: " << io::format_double(env.offset) << '\n'
            << "envelope.baseline: " << io::format_double(env.baseline) << '\n';
  for (const auto& f : env.flags) std::cout << "flag: " << f << '\n';
}

void kv(const char* key, double v) { std::cout << key << ": " << io::format_double(v) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fuzzy fractional dynamics: simulation and Mittag-Leffler stability certificates"};
  app.require_subcommand(1);
  std::function<int()> action;

  // mlf
  auto* mlf_cmd = app.add_subcommand("mlf", "Mittag-Leffler functions");
  mlf_cmd->require_subcommand(1);
  double mq = 0.5, mb = 1.0, mz = 0.0, mkappa = 1.0, mt = 1.0;
  auto* eval_cmd = mlf_cmd->add_subcommand("eval", "Evaluate E_q(z) or E_{q,b}(z)");
  eval_cmd->add_option("--q", mq, "Order q > 0")->required();
  auto* b_opt = eval_cmd->add_option("--b", mb, "Second parameter b");
  eval_cmd->add_option("--z", mz, "Argument z")->required()->allow_extra_args(false);
  eval_cmd->callback([&] {
    action = [&, b_opt] {
      const double v = b_opt->count() ? mlf::ml_two(mq, mb, mz) : mlf::ml_one(mq, mz);
      std::cout << std::setprecision(12) << v << '\n';
      return kExitPass;
    };
  });
  auto* conv_cmd = mlf_cmd->add_subcommand("conv", "Convolution integral (1 - E_q(-kappa t^q)) / kappa");
  conv_cmd->add_option("--q", mq, "Order q")->required();
  conv_cmd->add_option("--kappa", mkappa, "Rate kappa > 0")->required();
  conv_cmd->add_option("--t", mt, "Time t >= 0")->required();
  conv_cmd->callback([&] {
    action = [&] {
      std::cout << std::setprecision(12) << mlf::ml_conv_integral(mq, mkappa, mt) << '\n';
      return kExitPass;
    };
  });

  // simulate / run / sweep / verify share the config positional and overrides.
  std::string config_path;
  Overrides ov;

  auto* sim_cmd = app.add_subcommand("simulate", "Solve a scenario and write its trajectory as CSV");
  sim_cmd->add_option("config", config_path, "Scenario config (YAML)")->required();
  ov.attach(sim_cmd);
  sim_cmd->callback([&] {
    action = [&] {
      Config cfg = load_config(config_path);
      ov.apply(cfg);
      cfg.certificate = CertificateRequest{};
      const RunReport rep = run_scenario(cfg, RunOptions{ov.workers});
      const std::string csv = csv_of(rep);
      if (cfg.output.dir.empty()) {
        std::cout << csv;
      } else {
        const fs::path dir = ensure_dir(cfg.output.dir);
        const fs::path file = dir / (rep.moments ? "moments.csv" : "trajectory.csv");
        write_file(file, csv);
        std::cout << "wrote " << file.string() << '\n';
      }
      return kExitPass;
    };
  });

  auto* run_cmd = app.add_subcommand("run", "Simulate, certify and verify a scenario");
  run_cmd->add_option("config", config_path, "Scenario config (YAML)")->required();
  ov.attach(run_cmd);
  run_cmd->callback([&] {
    action = [&] {
      Config cfg = load_config(config_path);
      ov.apply(cfg);
      return emit_run(cfg, run_scenario(cfg, RunOptions{ov.workers}));
    };
  });

  auto* sweep_cmd = app.add_subcommand("sweep", "Run every combination of the config's sweep grid");
  sweep_cmd->add_option("config", config_path, "Scenario config with a sweep section")->required();
  ov.attach(sweep_cmd);
  sweep_cmd->callback([&] {
    action = [&] {
      Config cfg = load_config(config_path);
      ov.apply(cfg);
      const SweepResult res = sweep(cfg, ov.workers);
      std::cout << res.to_text();
      if (!cfg.output.dir.empty()) write_file(ensure_dir(cfg.output.dir) / "sweep.csv", res.to_csv());
      return res.passes == res.rows.size() ? kExitPass : kExitFail;
    };
  });

  std::string csv_path;
  auto* verify_cmd = app.add_subcommand("verify", "Check a trajectory CSV against the config's certificate");
  verify_cmd->add_option("config", config_path, "Scenario config (YAML)")->required();
  verify_cmd->add_option("--csv", csv_path, "Trajectory CSV with t and norm columns")->required();
  ov.attach(verify_cmd);
  verify_cmd->callback([&] {
    action = [&] {
      Config cfg = load_config(config_path);
      ov.apply(cfg);
      std::ifstream in(csv_path);
      if (!in) throw ConfigError(csv_path, 0, "cannot open trajectory CSV '" + csv_path + "'");
      const io::CsvTable table = io::read_csv(in);
      if (table.header.front() != "t" || table.header.back() != "norm") {
        throw ConfigError(csv_path, 1, "expected columns t, ..., norm");
      }
      std::vector<double> t, n;
      for (const auto& row : table.rows) {
        t.push_back(row.front());
        n.push_back(row.back());
      }
      const EnvelopeReport r = verify_series(cfg, t, n);
      std::cout << "points: " << r.n_points << "\nviolations: " << r.violations
                << "\nmax_excess: " << io::format_double(r.max_excess) << "\nfirst_violation_t: "
                << (r.first_violation_t ? io::format_double(*r.first_violation_t) : std::string("none"))
                << "\nresult: " << (r.pass ? "PASS" : "FAIL") << '\n';
      return r.pass ? kExitPass : kExitFail;
    };
  });

  std::string demo_name;
  auto* demo_cmd = app.add_subcommand("demo", "Run a built-in scenario (iss, lmi, ultimate, delay, small-gain, stochastic)");
  demo_cmd->add_option("name", demo_name, "Demo name, or 'list'")->required();
  ov.attach(demo_cmd);
  demo_cmd->callback([&] {
    action = [&] {
      if (demo_name == "list") {
        for (const auto& [n, text] : demos::kEmbedded) std::cout << n << '\n';
        return kExitPass;
      }
      Config cfg = demo_config(demo_name);
      ov.apply(cfg);
      return emit_run(cfg, run_scenario(cfg, RunOptions{ov.workers}));
    };
  });

  // certify <theorem>: constants only, no simulation.
  auto* cert_cmd = app.add_subcommand("certify", "Compute certificate constants");
  cert_cmd->require_subcommand(1);
  double c1 = 1, c2 = 1, c3 = 1, c4 = 1, ca = 1, alpha = 1, beta = 1, cq = 0.5, u0 = 1, gsup = 0, phi = 1, w0 = 1,
         ct = 0;
  double M1 = 1, M2 = 1, k1 = 1, k2 = 1, g12 = 0, g21 = 0, x0 = 1, y0 = 1;
  bool sub_unit = false;
  std::string matrix_text;

  auto* iss_cmd = cert_cmd->add_subcommand("iss", "ML-ISS envelope constants");
  for (auto [name, ptr] : {std::pair{"--c1", &c1}, {"--c2", &c2}, {"--c3", &c3}, {"--c4", &c4}, {"--a", &ca},
                           {"--q", &cq}, {"--u0", &u0}, {"--g-sup", &gsup}}) {
    iss_cmd->add_option(name, *ptr);
  }
  iss_cmd->add_flag("--allow-sub-unit", sub_unit, "Accept a < 1 with inflated constants");
  iss_cmd->callback([&] {
    action = [&] {
      LyapConstants lc{c1, c2, c3, c4, ca, 1.0, 1.0};
      const Envelope env = iss_envelope(lc, cq, u0, gsup, sub_unit);
      kv("kappa", lc.kappa());
      kv("M", env.M);
      kv("C", env.gain);
      print_envelope(env);
      return kExitPass;
    };
  });

  auto* ult_cmd = cert_cmd->add_subcommand("ultimate", "Ultimate bound under persistent input");
  for (auto [name, ptr] : {std::pair{"--alpha", &alpha}, {"--beta", &beta}, {"--a", &ca}, {"--g-sup", &gsup}}) {
    ult_cmd->add_option(name, *ptr);
  }
  ult_cmd->callback([&] {
    action = [&] {
      kv("ultimate_bound", ultimate_bound(alpha, beta, ca, gsup));
      return kExitPass;
    };
  });

  auto* lmi_cmd = cert_cmd->add_subcommand("lmi", "Lyapunov-equation certificate for D^q x = A x");
  lmi_cmd->add_option("--matrix", matrix_text, "Rows separated by ';', entries by ','")->required();
  lmi_cmd->add_option("--q", cq);
  lmi_cmd->callback([&] {
    action = [&] {
      const LmiCertificate cert = lmi_certificate(parse_matrix(matrix_text), cq);
      std::cout << "P:";
      for (Eigen::Index i = 0; i < cert.P.rows(); ++i) {
        std::cout << (i ? "; " : " ");
        for (Eigen::Index j = 0; j < cert.P.cols(); ++j) std::cout << (j ? ", " : "") << io::format_double(cert.P(i, j));
      }
      std::cout << '\n';
      kv("mu", cert.mu);
      kv("M", cert.M);
      kv("lambda", cert.lambda);
      kv("residual", cert.residual);
      return kExitPass;
    };
  });

  auto* delay_cmd = cert_cmd->add_subcommand("delay", "Lyapunov-Krasovskii envelope constants");
  for (auto [name, ptr] : {std::pair{"--c1", &c1}, {"--c2", &c2}, {"--alpha", &alpha}, {"--a", &ca}, {"--q", &cq},
                           {"--phi-sup", &phi}}) {
    delay_cmd->add_option(name, *ptr);
  }
  delay_cmd->add_flag("--allow-sub-unit", sub_unit);
  delay_cmd->callback([&] {
    action = [&] {
      print_envelope(delay_envelope(c1, c2, alpha, ca, cq, phi, sub_unit));
      return kExitPass;
    };
  });

  auto* sg_cmd = cert_cmd->add_subcommand("small-gain", "Small-gain bounds for two ISS subsystems");
  for (auto [name, ptr] : {std::pair{"--M1", &M1}, {"--M2", &M2}, {"--kappa1", &k1}, {"--kappa2", &k2},
                           {"--gamma12", &g12}, {"--gamma21", &g21}, {"--x0", &x0}, {"--y0", &y0}, {"--q", &cq}}) {
    sg_cmd->add_option(name, *ptr);
  }
  sg_cmd->callback([&] {
    action = [&] {
      const SmallGainResult r = small_gain(M1, M2, k1, k2, g12, g21, x0, y0, cq);
      kv("X_bound", r.X_bound);
      kv("Y_bound", r.Y_bound);
      print_envelope(r.envelope);
      return kExitPass;
    };
  });

  auto* st_cmd = cert_cmd->add_subcommand("stochastic", "Mean-square moment bound");
  for (auto [name, ptr] : {std::pair{"--alpha", &alpha}, {"--beta", &beta}, {"--c1", &c1}, {"--c2", &c2},
                           {"--a", &ca}, {"--w0", &w0}, {"--q", &cq}, {"--t", &ct}}) {
    st_cmd->add_option(name, *ptr);
  }
  st_cmd->callback([&] {
    action = [&] {
      kv("bound", stochastic_bound(alpha, beta, c1, c2, ca, w0, cq, ct));
      kv("limit", beta / (c1 * (alpha / c2)));
      return kExitPass;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "expression error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NotApplicable& e) {
    std::cerr << "certificate not applicable: " << e.what() << '\n';
    return kExitFail;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
