#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support/fixture.hpp"
#include "support/metrics_oracle.hpp"
#include "tabvfl/errors.hpp"
#include "tabvfl/eval/early_stopping.hpp"
#include "tabvfl/eval/experiment.hpp"
#include "tabvfl/eval/metrics.hpp"
#include "tabvfl/eval/probes.hpp"
#include "tabvfl/eval/report.hpp"

using namespace tabvfl;
using namespace tabvfl::eval;

namespace {

Matrix one_hot_scores(const std::vector<int>& labels, std::size_t n_classes) {
  Matrix m(labels.size(), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return m;
}

double probe_accuracy(const Probe& p, const Matrix& x, const std::vector<int>& y) {
  return accuracy(y, argmax_rows(p.predict_proba(x)));
}

// Two Gaussian blobs far apart, or the XOR quadrants.
void blobs(std::size_t n, std::mt19937_64& rng, Matrix& x, std::vector<int>& y) {
  std::normal_distribution<double> noise(0.0, 0.5);
  x = Matrix(n, 2);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    const double c = y[i] ? 3.0 : -3.0;
    x(i, 0) = c + noise(rng);
    x(i, 1) = c + noise(rng);
  }
}

void xor_layout(std::size_t n, std::mt19937_64& rng, Matrix& x, std::vector<int>& y) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  x = Matrix(n, 2);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double a = u(rng), b = u(rng);
    // keep clear of the axes
    a += a > 0 ? 0.1 : -0.1;
    b += b > 0 ? 0.1 : -0.1;
    x(i, 0) = a;
    x(i, 1) = b;
    y[i] = (a > 0) != (b > 0);
  }
}

// First epoch (1-based) at which `patience` non-improvements in a row have
// happened, or 0.
std::size_t brute_stop(const std::vector<double>& scores, std::size_t patience) {
  if (patience == 0) return 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (e + 1 < patience) continue;
    bool all_bad = true;
    for (std::size_t k = e + 1 - patience; k <= e && all_bad; ++k) {
      const double best_before = k == 0 ? INFINITY : *std::min_element(scores.begin(), scores.begin() + k);
      all_bad = !(scores[k] < best_before);
    }
    if (all_bad) return e + 1;
  }
  return 0;
}

MetricsRow sample_row() {
  MetricsRow r;
  r.design = "TabVFL";
  r.dataset = "syn,\"q\"";
  r.seed = 42;
  r.probe = "mlp";
  r.accuracy = 0.1;
  r.f1 = 2.0 / 3.0;
  r.roc_auc = 1.0;
  r.runtime_s = 1.25e-3;
  r.bytes_sent = 123456789012ULL;
  r.bytes_received = 7;
  return r;
}

}  // namespace

TEST_CASE("metrics: brute-force agreement on random prediction sets") {
  const auto r = testing::run_metrics_oracle(1000, 5);
  CHECK(r.sets == 1000);
  CHECK(r.f1 <= 1e-10);
  CHECK(r.auc <= 1e-10);
}

TEST_CASE("metrics: hand examples") {
  SUBCASE("binary confusion TP=2 FP=1 FN=1 TN=6") {
    std::vector<int> truth, pred;
    auto add = [&](int t, int p, int n) {
      for (int i = 0; i < n; ++i) {
        truth.push_back(t);
        pred.push_back(p);
      }
    };
    add(1, 1, 2);
    add(0, 1, 1);
    add(1, 0, 1);
    add(0, 0, 6);
    const double f1_pos = 2.0 / 3.0, f1_neg = 12.0 / 14.0;
    CHECK(macro_f1(truth, pred, 2) == doctest::Approx((f1_pos + f1_neg) / 2).epsilon(1e-14));
    CHECK(macro_f1(truth, pred, 2) == doctest::Approx(0.762).epsilon(1e-3));
    CHECK(accuracy(truth, pred) == doctest::Approx(0.8));
  }
  SUBCASE("perfect predictions") {
    const std::vector<int> y{0, 1, 2, 1, 0, 2, 2};
    const auto m = compute_metrics(y, one_hot_scores(y, 3));
    CHECK(m.accuracy == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.roc_auc == 1.0);
    CHECK(m.warnings.empty());
  }
  SUBCASE("ties average") {
    // one positive and one negative with equal score: AUC one half
    const std::vector<int> pos{1, 0};
    const std::vector<double> s{0.3, 0.3};
    CHECK(roc_auc_binary(pos, s) == 0.5);
  }
  SUBCASE("class absent from truth is skipped with a warning") {
    const std::vector<int> y{0, 0, 1, 1};
    const std::vector<int> p{0, 2, 1, 1};
    std::vector<std::string> w;
    const double f1 = macro_f1(y, p, 3, &w);
    CHECK(f1 == doctest::Approx(testing::macro_f1_bruteforce(y, p, 3)));
    CHECK(w.size() == 1);
  }
}

TEST_CASE("metrics: independent scores give chance AUC") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 20000;
  std::vector<int> y(n);
  Matrix s(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = u(rng) < 0.4;
    s(i, 1) = u(rng);
    s(i, 0) = 1.0 - s(i, 1);
  }
  const double auc = macro_roc_auc(y, s);
  CHECK(auc >= 0.45);
  CHECK(auc <= 0.55);
}

TEST_CASE("probes: separable, XOR and constant inputs") {
  std::mt19937_64 rng(17);
  Matrix x_tr, x_te;
  std::vector<int> y_tr, y_te;

  SUBCASE("blobs") {
    blobs(400, rng, x_tr, y_tr);
    blobs(200, rng, x_te, y_te);
    LogisticRegressionProbe lr;
    lr.fit(x_tr, y_tr, 2);
    CHECK(probe_accuracy(lr, x_te, y_te) >= 0.99);
  }
  SUBCASE("xor") {
    xor_layout(600, rng, x_tr, y_tr);
    xor_layout(300, rng, x_te, y_te);
    MlpProbe mlp({}, 5);
    mlp.fit(x_tr, y_tr, 2);
    LogisticRegressionProbe lr;
    lr.fit(x_tr, y_tr, 2);
    CHECK(probe_accuracy(mlp, x_te, y_te) >= 0.95);
    CHECK(std::abs(probe_accuracy(lr, x_te, y_te) - 0.5) <= 0.1);
  }
  SUBCASE("constant features") {
    const std::size_t n = 300;
    x_tr = Matrix(n, 3, 1.5);
    y_tr.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) y_tr[i] = i % 10 < 7 ? 1 : 0;
    for (const auto& p : train_probes(x_tr, y_tr, 2, 9)) {
      CAPTURE(p->name());
      CHECK(probe_accuracy(*p, x_tr, y_tr) == doctest::Approx(0.7).epsilon(1e-12));
    }
  }
  SUBCASE("single class rejected") {
    x_tr = Matrix(10, 2, 0.0);
    y_tr.assign(10, 1);
    CHECK_THROWS_AS(train_probes(x_tr, y_tr, 2, 1), DataError);
  }
}

TEST_CASE("probes: logistic regression ignores row order") {
  std::mt19937_64 rng(23);
  const std::size_t n = 300, d = 5;
  Matrix x = testing::random_matrix(n, d, rng);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x(i, 0) + 0.5 * x(i, 1) - x(i, 3) > 0.2;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix xp(n, d);
  std::vector<int> yp(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) xp(i, c) = x(perm[i], c);
    yp[i] = y[perm[i]];
  }
  const Matrix x_te = testing::random_matrix(200, d, rng);
  std::vector<int> y_te(200);
  for (std::size_t i = 0; i < 200; ++i) y_te[i] = x_te(i, 0) + 0.5 * x_te(i, 1) - x_te(i, 3) > 0.2;
  LogisticRegressionProbe a, b;
  a.fit(x, y, 2);
  b.fit(xp, yp, 2);
  CHECK(testing::rel_error(a.predict_proba(x_te), b.predict_proba(x_te)) <= 1e-9);
  CHECK(probe_accuracy(a, x_te, y_te) == probe_accuracy(b, x_te, y_te));
  CHECK(probe_accuracy(a, x_te, y_te) > 0.9);
}

TEST_CASE("early stopping") {
  SUBCASE("plateau at epoch 10 with patience 5 stops at 15") {
    EarlyStopper s(5);
    std::size_t stopped = 0;
    for (std::size_t e = 1; e <= 40 && !stopped; ++e) {
      const double loss = e <= 10 ? 1.0 / static_cast<double>(e) : 0.1;
      if (s.update(loss)) stopped = e;
    }
    CHECK(stopped == 15);
  }
  SUBCASE("patience 0 never stops") {
    EarlyStopper s(0);
    for (int e = 0; e < 100; ++e) CHECK_FALSE(s.update(1.0));
  }
  SUBCASE("agrees with a brute-force scan") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 2000; ++trial) {
      const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
      const std::size_t patience = std::uniform_int_distribution<std::size_t>(0, 6)(rng);
      std::vector<double> scores(len);
      for (auto& v : scores) v = std::uniform_int_distribution<int>(0, 5)(rng);
      EarlyStopper s(patience);
      std::size_t got = 0;
      for (std::size_t e = 0; e < len && !got; ++e)
        if (s.update(scores[e])) got = e + 1;
      CHECK(got == brute_stop(scores, patience));
    }
  }
}

TEST_CASE("latent split") {
  const auto [tr, te] = latent_split(1000, 4);
  CHECK(tr.size() == 700);
  CHECK(te.size() == 300);
  std::vector<std::size_t> all(tr);
  all.insert(all.end(), te.begin(), te.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> want(1000);
  std::iota(want.begin(), want.end(), 0);
  CHECK(all == want);
  const auto again = latent_split(1000, 4);
  CHECK(again.first == tr);
  CHECK(again.second == te);
  CHECK(latent_split(1000, 5).first != tr);
  CHECK_THROWS_AS(latent_split(0, 1), DataError);
}

TEST_CASE("reports") {
  const auto dir = std::filesystem::temp_directory_path() / "tabvfl_test_reports";
  std::filesystem::remove_all(dir);

  SUBCASE("one row gives header plus one line") {
    emit_report({sample_row()}, dir / "one.csv", ReportFormat::Csv);
    std::ifstream f(dir / "one.csv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(f, line)) lines.push_back(line);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == kReportHeader);
  }
  SUBCASE("csv round trip is byte identical") {
    std::vector<MetricsRow> rows{sample_row(), sample_row()};
    rows[1].probe = "mean";
    rows[1].f1 = 0.1 + 0.2;
    std::ostringstream a;
    write_report(a, rows, ReportFormat::Csv);
    std::istringstream in(a.str());
    const auto back = parse_report_csv(in);
    CHECK(back == rows);
    std::ostringstream b;
    write_report(b, back, ReportFormat::Csv);
    CHECK(a.str() == b.str());
  }
  SUBCASE("json carries 17 significant digits") {
    std::ostringstream out;
    write_report(out, {sample_row()}, ReportFormat::Json);
    const std::string s = out.str();
    CHECK(s.find("\"f1\": 0.66666666666666663") != std::string::npos);
    CHECK(s.find("\"accuracy\": 0.10000000000000001") != std::string::npos);
    const auto j = nlohmann::json::parse(s);
    REQUIRE(j.size() == 1);
    CHECK(j[0]["f1"].get<double>() == 2.0 / 3.0);
    CHECK(j[0]["dataset"] == "syn,\"q\"");
  }
  SUBCASE("empty rows and unwritable paths are errors") {
    CHECK_THROWS_AS(emit_report({}, dir / "x.csv", ReportFormat::Csv), DataError);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    CHECK_THROWS(emit_report({sample_row()}, dir / "file" / "x.csv", ReportFormat::Csv));
  }
  SUBCASE("mean row") {
    auto a = sample_row(), b = sample_row();
    a.f1 = 0.5;
    b.f1 = 1.0;
    const auto m = mean_row({a, b});
    CHECK(m.probe == "mean");
    CHECK(m.f1 == 0.75);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("experiment spec validation") {
  ExperimentSpec s = testing::fixture_spec();
  CHECK_NOTHROW(s.validate());
  SUBCASE("p outside [0,1]") {
    s.failures.p_grid = {0.2, 1.5};
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("empty seeds") {
    s.seeds.clear();
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("latent below guest count") {
    s.guests = 5;
    s.tabnet.latent_dim = 3;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("full-scale defaults are accepted") {
    ExperimentSpec p;
    p.tabnet.latent_dim = 5;
    CHECK(p.guests == 5);
    CHECK(p.pretrain_epochs == 300);
    CHECK(p.batch_size == 64);
    CHECK_NOTHROW(p.validate());
  }
  SUBCASE("run seeds extend to the requested count") {
    s.seeds = {10, 11};
    s.failures.runs = 4;
    CHECK(failure_run_seeds(s) == std::vector<std::uint64_t>{10, 11, 12, 13});
    s.failures.runs = 1;
    CHECK(failure_run_seeds(s) == std::vector<std::uint64_t>{10});
  }
  SUBCASE("summary statistics") {
    const auto sum = summarize(Strategy::Cache, 0.5, {0.5, 0.7});
    CHECK(sum.f1_mean == doctest::Approx(0.6));
    CHECK(sum.f1_std == doctest::Approx(std::sqrt(0.02)));
  }
}

namespace {

ExperimentSpec small_spec() {
  ExperimentSpec s = testing::fixture_spec();
  s.pretrain_epochs = 3;
  s.finetune_epochs = 3;
  s.batch_size = 64;
  s.tabnet.n_steps = 2;
  s.tabnet.latent_dim = 4;
  s.seeds = {3};
  s.probes.mlp_epochs = 5;
  return s;
}

}  // namespace

TEST_CASE("CT with the matched layout equals TabVFL") {
  const auto prep = testing::synthetic_fixture(400, 12, 2);
  ExperimentSpec s = small_spec();
  s.patience = 2;  // exercises validation on both sides
  const auto ct = run_design(s, prep, Design::CT, 3);
  const auto fed = run_design(s, prep, Design::TabVFL, 3);
  CHECK(testing::rel_error(fed.latents, ct.latents) <= 1e-8);
  REQUIRE(ct.rows.size() == fed.rows.size());
  for (std::size_t i = 0; i < ct.rows.size(); ++i) {
    CAPTURE(ct.rows[i].probe);
    CHECK(ct.rows[i].accuracy == doctest::Approx(fed.rows[i].accuracy).epsilon(1e-12));
    CHECK(ct.rows[i].f1 == doctest::Approx(fed.rows[i].f1).epsilon(1e-12));
    CHECK(ct.rows[i].roc_auc == doctest::Approx(fed.rows[i].roc_auc).epsilon(1e-9));
  }
  CHECK(ct.rows.back().probe == "mean");
  CHECK(ct.train.bytes.sent == 0);
  CHECK(fed.train.bytes.sent > 0);

  SUBCASE("single layout is a different but valid model") {
    s.ct_layout = CtLayout::Single;
    const auto single = run_design(s, prep, Design::CT, 3);
    CHECK(single.latents.rows() == prep.data.rows());
    CHECK(testing::rel_error(single.latents, ct.latents) > 1e-6);
  }
  SUBCASE("CT refuses failure injection") {
    CHECK_THROWS_AS(run_design(s, prep, Design::CT, 3, {Strategy::Cache, 0.5}), ConfigError);
  }
}

TEST_CASE("p=0 failure runs equal the baseline bitwise") {
  const auto prep = testing::synthetic_fixture(300, 12, 4);
  const ExperimentSpec s = small_spec();
  const auto base = run_design(s, prep, Design::TabVFL, 3);
  for (Strategy st : {Strategy::Cache, Strategy::Zeros}) {
    const auto run = run_design(s, prep, Design::TabVFL, 3, {st, 0.0});
    CHECK(run.latents == base.latents);
    REQUIRE(run.rows.size() == base.rows.size());
    for (std::size_t i = 0; i < run.rows.size(); ++i) {
      CHECK(run.rows[i].f1 == base.rows[i].f1);
      CHECK(run.rows[i].roc_auc == base.rows[i].roc_auc);
    }
  }
}

TEST_CASE("failure experiment grid shape") {
  const auto prep = testing::synthetic_fixture(300, 12, 4);
  ExperimentSpec s = small_spec();
  s.failures.p_grid = {0.0, 0.5};
  s.failures.runs = 2;
  std::vector<EpochLog> logs;
  const auto ex = run_failure_experiment(s, prep, [&](const EpochLog& l) { logs.push_back(l); });
  // baseline + 2 strategies × 2 p, 2 runs each
  CHECK(ex.cells.size() == 10);
  REQUIRE(ex.summary.size() == 5);
  CHECK(ex.summary[0].strategy == Strategy::None);
  // the p=0 cells match the baseline
  CHECK(ex.summary[1].p_fail == 0.0);
  CHECK(ex.summary[1].f1_mean == ex.summary[0].f1_mean);
  CHECK(ex.summary[3].f1_mean == ex.summary[0].f1_mean);
  bool saw_offline = false;
  for (const auto& l : logs) {
    if (l.epoch == 0) CHECK(l.offline.empty());
    saw_offline |= !l.offline.empty();
  }
  CHECK(saw_offline);
  std::ostringstream out;
  write_failure_summary(out, ex.summary);
  CHECK(out.str().rfind("strategy,p_fail,runs,f1_mean,f1_std\nbaseline,0,2,", 0) == 0);
}

TEST_CASE("early stopping ends a phase early") {
  const auto prep = testing::synthetic_fixture(300, 12, 4);
  ExperimentSpec s = small_spec();
  s.pretrain_epochs = 30;
  s.finetune_epochs = 30;
  s.patience = 1;
  std::vector<EpochLog> logs;
  const auto run = run_design(s, prep, Design::TabVFL, 3, {}, [&](const EpochLog& l) { logs.push_back(l); });
  CHECK(run.train.pretrain_epochs + run.train.finetune_epochs == logs.size());
  CHECK(run.train.finetune_epochs < 30);
  CHECK(logs.back().stopped);
}

TEST_CASE("design checkpoints reload into an untrained model") {
  const auto prep = testing::synthetic_fixture(300, 12, 4);
  const ExperimentSpec s = small_spec();
  const auto dir = std::filesystem::temp_directory_path() / "tabvfl_test_design_ckpt";
  std::filesystem::remove_all(dir);
  for (Design d : {Design::CT, Design::LT, Design::TabVFL_LE, Design::TabVFL}) {
    CAPTURE(protocol::to_string(d));
    auto trained = make_model(s, prep, d, 3);
    train_model(*trained, s, 3);
    trained->save_checkpoints(dir);
    const Matrix want = trained->extract_latents();
    auto fresh = make_model(s, prep, d, 99);
    fresh->begin_phase(Phase::Finetune);
    fresh->load_checkpoints(dir);
    CHECK(fresh->extract_latents() == want);
  }
  std::filesystem::remove_all(dir);
}
