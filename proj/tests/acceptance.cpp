// SPDX-License-Identifier: Apache-2.0
/**
 * @file   acceptance.cpp
 * @brief  One PASS/FAIL line per acceptance criterion; exits non-zero if any
 *         criterion fails.
 *
 * Usage: acceptance <project source dir>
 */
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include "specattn/analysis.hpp"
#include "specattn/harness.hpp"
#include "specattn/io.hpp"

namespace {

using namespace specattn;
namespace fs = std::filesystem;

int g_failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("criterion %d %-22s %s  %s\n", id, name.c_str(), ok ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

const PropertyResult* find(const VerifyReport& r, const std::string& name) {
  for (const PropertyResult& p : r.properties)
    if (p.name == name) return &p;
  return nullptr;
}

// Every named property passed with at least `min_cases` cases.
bool properties_hold(const VerifyReport& r, std::initializer_list<const char*> names,
                     std::size_t min_cases, std::string& detail) {
  bool ok = true;
  std::ostringstream os;
  for (const char* n : names) {
    const PropertyResult* p = find(r, n);
    if (!p) {
      os << n << " missing; ";
      ok = false;
      continue;
    }
    ok = ok && p->passed && p->cases >= min_cases;
    os << n << " cases=" << p->cases << " worst=" << format_double(p->worst_residual) << "; ";
  }
  detail = os.str();
  return ok;
}

void check_verify_suites() {
  std::string detail;
  const VerifyReport jac = run_verify("jacobian", 100);
  const bool c1 = properties_hold(
      jac, {"jacobian.a_q_matches_fd", "jacobian.a_k_matches_fd", "jacobian.a_v_matches_fd"}, 100,
      detail);
  report(1, "jacobian_fd", c1, detail);

  const VerifyReport corr = run_verify("corrections", 1000);
  const bool c2 = properties_hold(
      corr, {"corrections.svd_cap_kappa_at_most_2", "corrections.svd_cap_spectrum_shift"}, 1000,
      detail);
  report(2, "svd_cap", c2, detail);
  const bool c3 = properties_hold(
      corr, {"corrections.shift_reduces_kappa", "corrections.shift_precondition_arithmetic"}, 1000,
      detail);
  report(3, "diagonal_shift", c3, detail);

  const VerifyReport bound = run_verify("bound", 300);
  const bool c4 = properties_hold(bound, {"bound.kappa_j_within_bound"}, 200, detail);
  report(4, "bound_validity", c4, detail);

  const VerifyReport vec = run_verify("vec", 200);
  bool c5 = !vec.properties.empty() && vec.passed();
  std::ostringstream os;
  for (const PropertyResult& p : vec.properties)
    os << p.name << " worst=" << format_double(p.worst_residual) << "; ";
  report(5, "vectorization", c5, os.str());
}

void check_flops() {
  bool ok = flops_estimate(2, 3, 1, false) == 36 && flops_estimate(2, 3, 1, true) == 42;
  std::size_t cases = 0;
  for (std::uint64_t n = 1; n <= 8; ++n) {
    for (std::uint64_t big_d = 1; big_d <= 8; ++big_d) {
      for (std::uint64_t d = 1; d <= 8; ++d) {
        const std::uint64_t plain = flops_estimate(n, big_d, d, false);
        const std::uint64_t cond = flops_estimate(n, big_d, d, true);
        ok = ok && plain == 6 * n * big_d * d && cond == plain + 3 * n * d &&
             (cond - plain) * 2 * big_d == plain;
        ++cases;
      }
    }
  }
  report(6, "flops", ok, "grid of " + std::to_string(cases) + " (N, D, d)");
}

double reference_accuracy(const fs::path& csv) {
  const std::string text = read_text(csv);
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  const auto a = last.find(','), b = last.find(',', a + 1), c = last.find(',', b + 1);
  return parse_double(last.substr(b + 1, c - b - 1));
}

bool frozen(const TrainRun& run, std::string& why) {
  if (!(run.initial_corrections == run.final_corrections)) {
    why = "corrections changed";
    return false;
  }
  for (const std::string& n : run.optimizer_state) {
    if (n.find("correction") != std::string::npos) {
      why = "optimizer state holds " + n;
      return false;
    }
  }
  ModelParams p = run.final_params;
  if (run.optimizer_state.size() != p.entries().size()) {
    why = "optimizer state size differs from trainable tensors";
    return false;
  }
  return true;
}

void check_training(const fs::path& root) {
  RunConfig on = read_config(root / "configs" / "reference.cfg");
  RunConfig off = on;
  off.model.conditioning = Conditioning::off();
  auto off_future = std::async(std::launch::async, [&] { return train(off); });
  const TrainRun run_on = train(on);
  const TrainRun run_off = off_future.get();

  const auto t_on = conditioning_trajectory(run_on.metrics.probes);
  const auto t_off = conditioning_trajectory(run_off.metrics.probes);
  bool dominated = run_on.metrics.status == RunStatus::Completed;
  for (const TrajectoryPoint& p : t_on)
    for (const RoleAggregate& r : p.roles) dominated = dominated && r.wc_kappa < r.w_kappa;
  const double j_on = t_on.back().kappa_j_effective;
  const double j_off = t_off.back().kappa_j_effective;
  const double acc_on = t_on.back().eval_acc, acc_off = t_off.back().eval_acc;
  const double ref_on = reference_accuracy(root / "configs" / "reference_metrics.csv");
  const double ref_off = reference_accuracy(root / "configs" / "reference_metrics_off.csv");
  const bool ok = dominated && j_on <= j_off && acc_on > 0.9 && acc_off > 0.9 &&
                  std::abs(acc_on - ref_on) <= 0.02 && std::abs(acc_off - ref_off) <= 0.02;
  std::ostringstream os;
  os << "kappa(W+C)<kappa(W) at all " << t_on.size() << " probes: " << (dominated ? "yes" : "no")
     << "; final kappa_eff(J) " << format_double(j_on) << " vs " << format_double(j_off)
     << "; eval_acc " << acc_on << " (ref " << ref_on << ") / " << acc_off << " (ref " << ref_off
     << "); reference metrics byte-identical: "
     << (metrics_csv(t_on) == read_text(root / "configs" / "reference_metrics.csv") &&
                 metrics_csv(t_off) == read_text(root / "configs" / "reference_metrics_off.csv")
             ? "yes"
             : "no");
  report(7, "trajectory_shape", ok, os.str());

  std::string why_on, why_off;
  const bool f_on = frozen(run_on, why_on), f_off = frozen(run_off, why_off);
  report(8, "correction_freeze", f_on && f_off,
         f_on && f_off ? "corrections bit-identical; optimizer state has " +
                             std::to_string(run_on.optimizer_state.size()) + " trainable tensors"
                       : why_on + why_off);
}

void check_determinism(const fs::path& root) {
  const RunConfig cfg = read_config(root / "configs" / "smoke.cfg");
  const fs::path base = fs::temp_directory_path() / "specattn_acceptance";
  fs::remove_all(base);
  RunManifest m;
  m.command = "acceptance";
  write_train_run(base / "a", train(cfg), m);
  write_train_run(base / "b", train(cfg), m);
  bool ok = true;
  for (const char* f : {"metrics.csv", "metrics.json", "train_loss.csv"})
    ok = ok && read_text(base / "a" / f) == read_text(base / "b" / f);
  fs::remove_all(base);
  report(9, "determinism", ok, "metrics.csv, metrics.json, train_loss.csv byte-compared");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <project source dir>\n");
    return 2;
  }
  const fs::path root = argv[1];
  try {
    check_verify_suites();
    check_flops();
    check_training(root);
    check_determinism(root);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%s\n", g_failures == 0 ? "all criteria passed" : "some criteria FAILED");
  return g_failures == 0 ? 0 : 1;
}
