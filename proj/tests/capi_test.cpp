// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "specattn/specattn.h"

namespace {

namespace fs = std::filesystem;

fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / (std::string("specattn_capi_") + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

sa_config* small_config() {
  sa_config* cfg = nullptr;
  EXPECT_EQ(sa_config_default(&cfg), SA_OK);
  const char* kv[][2] = {{"layers", "1"},     {"heads", "1"},         {"d_model", "4"},
                         {"d_head", "4"},     {"seq_len", "5"},       {"ffn_width", "4"},
                         {"steps", "6"},      {"batch_size", "2"},    {"probe_every", "3"},
                         {"n_train", "8"},    {"n_eval", "4"},        {"probe_samples", "2"}};
  for (auto& p : kv) EXPECT_EQ(sa_config_set(cfg, p[0], p[1]), SA_OK) << p[0];
  return cfg;
}

TEST(CApi, MatrixLifecycleAndSpectral) {
  const double data[] = {10, 0, 0, 2};
  sa_matrix* m = nullptr;
  ASSERT_EQ(sa_matrix_create(2, 2, data, &m), SA_OK);
  EXPECT_EQ(sa_matrix_rows(m), 2u);
  EXPECT_EQ(sa_matrix_cols(m), 2u);
  EXPECT_EQ(std::memcmp(sa_matrix_data(m), data, sizeof data), 0);
  sa_spectral_record r{};
  ASSERT_EQ(sa_spectral(m, &r), SA_OK);
  EXPECT_DOUBLE_EQ(r.kappa, 5.0);

  sa_matrix* c = nullptr;
  ASSERT_EQ(sa_svd_cap_correction(m, &c), SA_OK);
  EXPECT_NEAR(sa_matrix_data(c)[0], 10.0, 1e-14);
  EXPECT_NEAR(sa_matrix_data(c)[3], 10.0, 1e-14);
  sa_matrix_free(c);
  sa_matrix_free(m);
}

TEST(CApi, ErrorsMapToStatus) {
  sa_matrix* m = nullptr;
  const double bad[] = {NAN};
  EXPECT_EQ(sa_matrix_create(1, 1, bad, &m), SA_ERR_NUMERICAL);
  EXPECT_NE(std::strlen(sa_last_error()), 0u);
  EXPECT_EQ(sa_matrix_create(1, 1, nullptr, &m), SA_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(sa_diag_shift_correction(2, 2, 1.0, &m), SA_ERR_CONSTRAINT);
  const double zeros[] = {0, 0, 0, 0};
  ASSERT_EQ(sa_matrix_create(2, 2, zeros, &m), SA_OK);
  sa_matrix* c = nullptr;
  EXPECT_EQ(sa_svd_cap_correction(m, &c), SA_ERR_DEGENERATE);
  sa_matrix_free(m);
  EXPECT_EQ(sa_matrix_read_csv("/nonexistent/x.csv", &m), SA_ERR_IO);
  EXPECT_STREQ(sa_status_name(SA_ERR_PARSE), "parse error");
  sa_matrix_free(nullptr);
  sa_config_free(nullptr);
}

TEST(CApi, ParseErrorNamesLine) {
  const fs::path dir = scratch("parse");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.csv") << "2,2\n1,2\n3,oops\n";
  sa_matrix* m = nullptr;
  EXPECT_EQ(sa_matrix_read_csv((dir / "bad.csv").c_str(), &m), SA_ERR_PARSE);
  EXPECT_NE(std::string(sa_last_error()).find("line 3"), std::string::npos);
  fs::remove_all(dir);
}

TEST(CApi, JacobianAndBound) {
  const double x[] = {1, 0.5, -0.3, 0.2, 0.7, 1.1};
  const double wq[] = {0.3, -0.2, 0.5, 0.1, -0.4, 0.6};
  const double wk[] = {0.2, 0.4, -0.1, 0.3, 0.5, -0.2};
  const double wv[] = {0.7, 0.1, -0.3, 0.6, 0.2, 0.4};
  sa_matrix *mx, *mq, *mk, *mv, *j = nullptr;
  ASSERT_EQ(sa_matrix_create(2, 3, x, &mx), SA_OK);
  ASSERT_EQ(sa_matrix_create(3, 2, wq, &mq), SA_OK);
  ASSERT_EQ(sa_matrix_create(3, 2, wk, &mk), SA_OK);
  ASSERT_EQ(sa_matrix_create(3, 2, wv, &mv), SA_OK);
  ASSERT_EQ(sa_jacobian(mx, mq, mk, mv, &j), SA_OK);
  EXPECT_EQ(sa_matrix_rows(j), 12u);
  EXPECT_EQ(sa_matrix_cols(j), 6u);
  sa_bound_report b{};
  ASSERT_EQ(sa_evaluate_bound(mx, mq, mk, mv, &b), SA_OK);
  EXPECT_TRUE(b.inequality_holds);
  sa_matrix* wrong = nullptr;
  EXPECT_EQ(sa_jacobian(mx, mx, mk, mv, &wrong), SA_ERR_DIMENSION);
  for (sa_matrix* m : {mx, mq, mk, mv, j}) sa_matrix_free(m);
}

TEST(CApi, Flops) {
  uint64_t v = 0;
  ASSERT_EQ(sa_flops_estimate(2, 3, 1, 0, &v), SA_OK);
  EXPECT_EQ(v, 36u);
  ASSERT_EQ(sa_flops_estimate(2, 3, 1, 1, &v), SA_OK);
  EXPECT_EQ(v, 42u);
  EXPECT_EQ(sa_flops_estimate(0, 3, 1, 1, &v), SA_ERR_INVALID_ARGUMENT);
}

TEST(CApi, ConfigRoundTrip) {
  sa_config* cfg = small_config();
  char* v = nullptr;
  ASSERT_EQ(sa_config_get(cfg, "d_model", &v), SA_OK);
  EXPECT_STREQ(v, "4");
  sa_string_free(v);
  EXPECT_EQ(sa_config_set(cfg, "nope", "1"), SA_ERR_CONFIG);
  EXPECT_EQ(sa_config_set(cfg, "steps", "x"), SA_ERR_CONFIG);
  EXPECT_EQ(sa_config_validate(cfg), SA_OK);

  char* text = nullptr;
  ASSERT_EQ(sa_config_format(cfg, &text), SA_OK);
  const fs::path dir = scratch("config");
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << text;
  sa_string_free(text);
  sa_config* back = nullptr;
  ASSERT_EQ(sa_config_read((dir / "run.cfg").c_str(), &back), SA_OK);
  ASSERT_EQ(sa_config_get(back, "n_eval", &v), SA_OK);
  EXPECT_STREQ(v, "4");
  sa_string_free(v);
  sa_config_free(back);
  sa_config_free(cfg);
  fs::remove_all(dir);
}

TEST(CApi, TrainIsByteReproducible) {
  sa_config* cfg = small_config();
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  char* s = nullptr;
  ASSERT_EQ(sa_train(cfg, a.c_str(), "test", &s), SA_OK) << sa_last_error();
  sa_string_free(s);
  ASSERT_EQ(sa_train(cfg, b.c_str(), "test", &s), SA_OK);
  sa_string_free(s);
  for (const char* f : {"metrics.csv", "metrics.json", "train_loss.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  sa_config_free(cfg);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CApi, TrainReportsDivergence) {
  sa_config* cfg = small_config();
  ASSERT_EQ(sa_config_set(cfg, "lr", "1e300"), SA_OK);
  const fs::path dir = scratch("diverge");
  char* s = nullptr;
  EXPECT_EQ(sa_train(cfg, dir.c_str(), "test", &s), SA_ERR_DIVERGED);
  sa_string_free(s);
  EXPECT_NE(slurp(dir / "manifest.json").find("\"diverged\""), std::string::npos);
  sa_config_free(cfg);
  fs::remove_all(dir);
}

TEST(CApi, AblateDropsDuplicates) {
  sa_config* cfg = small_config();
  const fs::path dir = scratch("ablate");
  const double lambdas[] = {10, 2, 10};
  char* s = nullptr;
  ASSERT_EQ(sa_ablate(cfg, lambdas, 3, dir.c_str(), "test", &s), SA_OK) << sa_last_error();
  sa_string_free(s);
  const std::string table = slurp(dir / "ablation.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_NE(slurp(dir / "manifest.json").find("duplicate"), std::string::npos);
  EXPECT_EQ(sa_ablate(cfg, lambdas, 0, dir.c_str(), "test", &s), SA_ERR_CONFIG);
  const double low[] = {1.0};
  EXPECT_EQ(sa_ablate(cfg, low, 1, dir.c_str(), "test", &s), SA_ERR_CONSTRAINT);
  sa_config_free(cfg);
  fs::remove_all(dir);
}

TEST(CApi, VerifyWritesReport) {
  const fs::path dir = scratch("verify");
  int passed = 0;
  char* s = nullptr;
  ASSERT_EQ(sa_verify("vec", 5, dir.c_str(), "test", &passed, &s), SA_OK);
  sa_string_free(s);
  EXPECT_EQ(passed, 1);
  EXPECT_TRUE(fs::exists(dir / "verify.json"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_EQ(sa_verify("bogus", 5, dir.c_str(), "test", &passed, &s), SA_ERR_CONFIG);
  fs::remove_all(dir);
}

}  // namespace
