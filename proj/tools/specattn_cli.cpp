// SPDX-License-Identifier: Apache-2.0
/**
 * @file   specattn_cli.cpp
 * @brief  `specattn` command line: verify, analyze, train, ablate, flops.
 *
 * Exit status: 0 success, 1 property failure or divergence, 2 usage,
 * configuration or input error.
 */
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specattn/specattn.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int exit_code(sa_status s) {
  switch (s) {
    case SA_OK: return kExitOk;
    case SA_ERR_NUMERICAL:
    case SA_ERR_DIVERGED:
    case SA_ERR_INTERNAL: return kExitFailure;
    default: return kExitUsage;
  }
}

int report(sa_status s, const char* what) {
  if (s != SA_OK) std::fprintf(stderr, "specattn %s: %s: %s\n", what, sa_status_name(s), sa_last_error());
  return exit_code(s);
}

void print_and_free(char* text) {
  if (!text) return;
  std::fputs(text, stdout);
  sa_string_free(text);
}

std::string take(char* text) {
  std::string s = text ? text : "";
  sa_string_free(text);
  return s;
}

std::filesystem::path default_dir(const std::string& name) {
  char* root = nullptr;
  if (sa_output_root(&root) != SA_OK) return name;
  return std::filesystem::path(take(root)) / name;
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

struct ConfigOptions {
  std::string path;
  std::string conditioning;
  std::vector<std::string> sets;
  double lambda = 0.0;
  std::int64_t seed = -1;
  std::int64_t steps = -1;
};

void add_config_options(CLI::App* cmd, ConfigOptions& o) {
  cmd->add_option("-c,--config", o.path, "Flat key = value run configuration");
  cmd->add_option("--conditioning", o.conditioning, "off | svd_cap | diagonal_shift")
      ->check(CLI::IsMember({"off", "svd_cap", "diagonal_shift"}));
  cmd->add_option("--lambda", o.lambda, "Diagonal shift λ (≥ 2)");
  cmd->add_option("--seed", o.seed, "Run seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--steps", o.steps, "Training steps")->check(CLI::NonNegativeNumber);
  cmd->add_option("--set", o.sets, "Override any config key: key=value (repeatable)");
}

// Loads the config and applies overrides; returns a status and the handle.
sa_status load_config(const ConfigOptions& o, sa_config** cfg) {
  sa_status s = o.path.empty() ? sa_config_default(cfg) : sa_config_read(o.path.c_str(), cfg);
  if (s != SA_OK) return s;
  const auto set = [&](const std::string& key, const std::string& value) {
    return s == SA_OK ? sa_config_set(*cfg, key.c_str(), value.c_str()) : s;
  };
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      s = sa_config_set(*cfg, kv.c_str(), "");
      continue;
    }
    s = set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.conditioning.empty()) s = set("conditioning", o.conditioning);
  if (o.lambda != 0.0) s = set("lambda", CLI::detail::to_string(o.lambda));
  if (o.seed >= 0) s = set("seed", std::to_string(o.seed));
  if (o.steps >= 0) s = set("steps", std::to_string(o.steps));
  if (s == SA_OK) s = sa_config_validate(*cfg);
  return s;
}

std::string run_name(const char* command, const ConfigOptions& o, const sa_config* cfg) {
  const std::string stem =
      o.path.empty() ? std::string("default") : std::filesystem::path(o.path).stem().string();
  char* seed = nullptr;
  char* cond = nullptr;
  sa_config_get(cfg, "seed", &seed);
  sa_config_get(cfg, "conditioning", &cond);
  return std::string(command) + "-" + stem + "-" + take(cond) + "-seed" + take(seed);
}

std::vector<double> parse_lambdas(const std::string& text, bool& ok) {
  std::vector<double> out;
  ok = true;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(start, end - start);
    if (!item.empty()) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectrally conditioned self-attention: verification, analysis and training"};
  app.set_version_flag("--version", std::string(sa_version()));
  app.require_subcommand(1);
  const std::string invoked = command_line(argc, argv);

  // verify
  auto* verify = app.add_subcommand("verify", "Run seeded property suites");
  std::string suite = "all";
  std::size_t seeds = 100;
  std::string verify_out;
  verify->add_option("--suite", suite, "all | jacobian | corrections | bound | vec")
      ->check(CLI::IsMember({"all", "jacobian", "corrections", "bound", "vec"}));
  verify->add_option("--seeds", seeds, "Seeds per property");
  verify->add_option("-o,--out", verify_out, "Report directory");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Conditioning analysis of one attention head");
  std::string params_path, x_path, analyze_out;
  std::string analyze_mode = "diagonal_shift";
  double analyze_lambda = 10.0;
  analyze->add_option("--params", params_path, "W_Q, W_K, W_V as three CSV blocks")->required();
  analyze->add_option("--x", x_path, "Input X as a CSV block")->required();
  analyze->add_option("--conditioning", analyze_mode, "off | svd_cap | diagonal_shift")
      ->check(CLI::IsMember({"off", "svd_cap", "diagonal_shift"}));
  analyze->add_option("--lambda", analyze_lambda, "Diagonal shift λ");
  analyze->add_option("-o,--out", analyze_out, "Output directory");

  // train
  auto* train = app.add_subcommand("train", "Train the toy transformer and log probes");
  ConfigOptions train_opts;
  std::string train_out;
  add_config_options(train, train_opts);
  train->add_option("-o,--out", train_out, "Run directory");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Diagonal-shift λ sweep on shared seed and data");
  ConfigOptions ablate_opts;
  std::string lambdas_text;
  std::string ablate_out;
  add_config_options(ablate, ablate_opts);
  ablate->add_option("--lambdas", lambdas_text, "Comma-separated λ values")->required();
  ablate->add_option("-o,--out", ablate_out, "Output directory");

  // flops
  auto* flops = app.add_subcommand("flops", "Q/K/V projection FLOPS per head");
  std::uint64_t n = 0, d_model = 0, d_head = 0;
  flops->add_option("-n,--seq-len", n, "Sequence length N")->required();
  flops->add_option("--d-model", d_model, "Model width D")->required();
  flops->add_option("--d-head", d_head, "Head width d")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*verify) {
    const std::filesystem::path dir =
        verify_out.empty() ? default_dir("verify-" + suite) : std::filesystem::path(verify_out);
    int passed = 0;
    char* summary = nullptr;
    const sa_status s =
        sa_verify(suite.c_str(), seeds, dir.string().c_str(), invoked.c_str(), &passed, &summary);
    print_and_free(summary);
    if (s != SA_OK) return report(s, "verify");
    return passed ? kExitOk : kExitFailure;
  }

  if (*analyze) {
    const sa_conditioning mode = analyze_mode == "off"       ? SA_CONDITIONING_OFF
                                 : analyze_mode == "svd_cap" ? SA_CONDITIONING_SVD_CAP
                                                             : SA_CONDITIONING_DIAGONAL_SHIFT;
    const std::filesystem::path dir =
        analyze_out.empty() ? default_dir("analyze-" + std::filesystem::path(params_path).stem().string())
                            : std::filesystem::path(analyze_out);
    char* summary = nullptr;
    const sa_status s = sa_analyze(params_path.c_str(), x_path.c_str(), mode, analyze_lambda,
                                   dir.string().c_str(), invoked.c_str(), &summary);
    print_and_free(summary);
    return report(s, "analyze");
  }

  if (*train) {
    sa_config* cfg = nullptr;
    sa_status s = load_config(train_opts, &cfg);
    if (s != SA_OK) {
      sa_config_free(cfg);
      return report(s, "train");
    }
    const std::filesystem::path dir = train_out.empty()
                                          ? default_dir(run_name("train", train_opts, cfg))
                                          : std::filesystem::path(train_out);
    char* summary = nullptr;
    s = sa_train(cfg, dir.string().c_str(), invoked.c_str(), &summary);
    sa_config_free(cfg);
    print_and_free(summary);
    return report(s, "train");
  }

  if (*ablate) {
    bool ok = true;
    const auto lambdas = parse_lambdas(lambdas_text, ok);
    if (!ok) {
      std::fprintf(stderr, "specattn ablate: malformed --lambdas '%s'\n", lambdas_text.c_str());
      return kExitUsage;
    }
    sa_config* cfg = nullptr;
    sa_status s = load_config(ablate_opts, &cfg);
    if (s != SA_OK) {
      sa_config_free(cfg);
      return report(s, "ablate");
    }
    const std::filesystem::path dir = ablate_out.empty()
                                          ? default_dir(run_name("ablate", ablate_opts, cfg))
                                          : std::filesystem::path(ablate_out);
    char* summary = nullptr;
    s = sa_ablate(cfg, lambdas.data(), lambdas.size(), dir.string().c_str(), invoked.c_str(),
                  &summary);
    sa_config_free(cfg);
    print_and_free(summary);
    return report(s, "ablate");
  }

  if (*flops) {
    std::uint64_t plain = 0, conditioned = 0;
    sa_status s = sa_flops_estimate(n, d_model, d_head, 0, &plain);
    if (s == SA_OK) s = sa_flops_estimate(n, d_model, d_head, 1, &conditioned);
    if (s != SA_OK) return report(s, "flops");
    std::printf("original %llu\nconditioned %llu\noverhead %.17g\n",
                static_cast<unsigned long long>(plain),
                static_cast<unsigned long long>(conditioned),
                static_cast<double>(conditioned - plain) / static_cast<double>(plain));
    return kExitOk;
  }
  return kExitUsage;
}
