#include <cmath>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "support.hpp"
#include "teleplan/error.hpp"
#include "teleplan/reward.hpp"

// After Eigen: resolv.h defines a _res macro that breaks Eigen headers.
#include <httplib.h>

using namespace teleplan;
using teleplan::testing::make_scenario;
using teleplan::testing::site;

TEST(Reward, ComplaintTable) {
  EXPECT_EQ(mock_complaint_score(""), 0.0);
  EXPECT_EQ(mock_complaint_score("nothing relevant"), 0.0);
  EXPECT_EQ(mock_complaint_score("radiation concern"), 6.0);
  EXPECT_EQ(mock_complaint_score("No signal at home, please build a tower"), -9.0);
  EXPECT_EQ(mock_complaint_score("radiation radiation"), 6.0);
  // 6 + 8 + 3 clamps at 10.
  EXPECT_EQ(mock_complaint_score("Radiation! oppose construction, noise"), 10.0);
}

TEST(Reward, ClusterScore) {
  auto sc = make_scenario({site("a", 0, 0), site("b", 0, 0), site("c", 500, 0)}, 2);
  const std::vector<std::size_t> same{0, 1}, apart{0, 2}, single{2};
  EXPECT_DOUBLE_EQ(cluster_score(same, sc, 500.0), 1.0);
  EXPECT_NEAR(cluster_score(apart, sc, 500.0), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(cluster_score(apart, sc, 500.0), 0.367879, 1e-6);
  EXPECT_EQ(cluster_score(single, sc, 500.0), 0.0);
}

TEST(Reward, StageExamples) {
  const RewardWeights w;
  RewardTerms t{0.5, 0.5, 0.0, 0.0, 0.0};
  EXPECT_EQ(stage_reward(t, Stage::kOne, w), 11.0);
  t.m = 0.4;
  t.e = 0.3;
  EXPECT_DOUBLE_EQ(stage_reward(t, Stage::kTwo, w), -1.0);
  t.k = 0.5;
  EXPECT_DOUBLE_EQ(stage_reward(t, Stage::kThree, w), 3.8);
}

TEST(Reward, StageLinearity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1, 1);
  const RewardWeights w;
  for (int i = 0; i < 50; ++i) {
    RewardTerms a{d(rng), d(rng), d(rng), d(rng), d(rng)};
    RewardTerms b{d(rng), d(rng), d(rng), d(rng), d(rng)};
    RewardTerms s{a.t + b.t, a.u + b.u, a.m + b.m, a.e + b.e, a.k + b.k};
    for (Stage st : {Stage::kOne, Stage::kTwo, Stage::kThree})
      EXPECT_NEAR(stage_reward(s, st, w), stage_reward(a, st, w) + stage_reward(b, st, w), 1e-12);
  }
}

TEST(Reward, CombinedAndClamp) {
  RewardWeights w;
  EXPECT_DOUBLE_EQ(combined_reward(3.8, 7.0, w), 10.8);
  RewardDiagnostics diag;
  EXPECT_DOUBLE_EQ(combined_reward(1.0, 12.0, w, &diag), 11.0);
  EXPECT_DOUBLE_EQ(combined_reward(1.0, -3.0, w, &diag), 1.0);
  EXPECT_EQ(diag.clamped_llm_scores.load(), 2u);
  w.w2 = 0.0;
  EXPECT_DOUBLE_EQ(combined_reward(2.5, 9.0, w), 2.5);
}

TEST(Reward, SetTermsSingleton) {
  auto sc = make_scenario({site("a", 0, 0, 0, 0, 0), site("b", 1, 0, 4, 6, 2),
                           site("c", 2, 0, 10, 10, 10)},
                          1);
  const auto ns = normalize_features(sc);
  MockScorer scorer;
  const std::vector<std::string> sel{"b"};
  const auto t = set_terms(sel, ns, scorer);
  EXPECT_NEAR(t.t, 0.4, 1e-12);
  EXPECT_NEAR(t.u, 0.6, 1e-12);
  EXPECT_NEAR(t.e, 0.2, 1e-12);
  EXPECT_EQ(t.m, 0.0);
  EXPECT_EQ(t.k, 0.0);
  const std::vector<std::string> bad{"zz"};
  EXPECT_THROW(set_terms(bad, ns, scorer), LookupError);
}

TEST(Reward, SetTermsMatchesReaggregation) {
  const auto sc = generate_scenario(4, 60, 20, ScenarioProfile::kUrbanCluster);
  const auto ns = normalize_features(sc);
  MockScorer scorer;
  std::vector<std::size_t> idx(sc.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(9);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(20);
  const auto t = set_terms(idx, ns, scorer, 500.0);

  double st = 0, su = 0, sm = 0, se = 0, sk = 0;
  for (auto i : idx) {
    const auto& s = sc.sites[i];
    const auto& tb = ns.throughput_bounds;
    st += tb.max > tb.min ? (s.throughput_mbps - tb.min) / (tb.max - tb.min) : 0.0;
    su += ns.u_hat[i];
    se += ns.e_hat[i];
    sm += mock_complaint_score(s.complaints_text) / 10.0;
    double nn = 1e300;
    for (auto j : idx)
      if (j != i) nn = std::min(nn, std::hypot(s.position.x - sc.sites[j].position.x,
                                                s.position.y - sc.sites[j].position.y));
    sk += std::exp(-nn / 500.0);
  }
  EXPECT_NEAR(t.t, st / 20, 1e-12);
  EXPECT_NEAR(t.u, su / 20, 1e-12);
  EXPECT_NEAR(t.m, sm / 20, 1e-12);
  EXPECT_NEAR(t.e, se / 20, 1e-12);
  EXPECT_NEAR(t.k, sk / 20, 1e-12);
}

TEST(Reward, MockSemanticExtremes) {
  // Four key-area sites, one per quadrant, no objections.
  auto good = make_scenario({site("a", -1, -1), site("b", 1, -1), site("c", -1, 1), site("d", 1, 1)}, 4);
  for (auto& s : good.sites) s.key_area = true;
  const std::vector<std::size_t> all{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(mock_semantic_score(all, good), 10.0);

  auto bad = make_scenario({site("a", 1, 1), site("b", 2, 2), site("z", -5, -5)}, 2);
  for (auto& s : bad.sites) s.complaints_text = "radiation";
  const std::vector<std::size_t> corner{0, 1};
  EXPECT_DOUBLE_EQ(mock_semantic_score(corner, bad), 0.0);
}

TEST(Reward, MockSemanticOracle) {
  const auto sc = generate_scenario(12, 80, 20, ScenarioProfile::kUrbanCluster);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> idx(sc.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(20);
    const double cx = 0.5 * (sc.bbox.min.x + sc.bbox.max.x);
    const double cy = 0.5 * (sc.bbox.min.y + sc.bbox.max.y);
    int quad[4] = {0, 0, 0, 0};
    int key = 0, neg = 0;
    for (auto i : idx) {
      const auto& s = sc.sites[i];
      key += s.key_area;
      neg += mock_complaint_score(s.complaints_text) > 0;
      quad[(s.position.x >= cx) + 2 * (s.position.y >= cy)]++;
    }
    const double share = *std::max_element(quad, quad + 4) / 20.0;
    const double balance = 1.0 - (share - 0.25) / 0.75;
    const double raw = 0.4 * key / 20.0 + 0.3 * balance + 0.3 * (1.0 - neg / 20.0);
    EXPECT_NEAR(mock_semantic_score(idx, sc), 10.0 * std::clamp(raw, 0.0, 1.0), 1e-12);
  }
}

TEST(Reward, ParseScore) {
  EXPECT_EQ(parse_score_response("Score: 8\nReasoning: fine"), 8.0);
  EXPECT_EQ(parse_score_response("preamble\n  Score: 6.5/10"), 6.5);
  EXPECT_FALSE(parse_score_response("Score: eleven").has_value());
  EXPECT_FALSE(parse_score_response("Score: 11").has_value());
  EXPECT_FALSE(parse_score_response("no score here").has_value());
}

TEST(Reward, RemoteScorerParsesAndFallsBack) {
  httplib::Server server;
  std::string reply = "Score: 8\nReasoning: balanced";
  server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
    EXPECT_NE(req.body.find("prompt"), std::string::npos);
    res.set_content(reply, "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const auto sc = generate_scenario(1, 20, 5, ScenarioProfile::kUniform);
  const std::vector<std::size_t> sel{0, 1, 2, 3, 4};
  RemoteScorer remote({"http://127.0.0.1:" + std::to_string(port) + "/score", 5.0});
  EXPECT_EQ(remote.score_selection(sel, sc), 8.0);
  EXPECT_EQ(remote.fallback_count(), 0u);

  reply = "Score: eleven";
  EXPECT_DOUBLE_EQ(remote.score_selection(sel, sc), mock_semantic_score(sel, sc));
  EXPECT_EQ(remote.fallback_count(), 1u);
  server.stop();
  th.join();
}

TEST(Reward, RemoteScorerUnreachable) {
  const auto sc = generate_scenario(1, 20, 5, ScenarioProfile::kUniform);
  const std::vector<std::size_t> sel{0, 1, 2, 3, 4};
  RemoteScorer remote({"http://127.0.0.1:1/score", 1.0});
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_DOUBLE_EQ(remote.score_selection(sel, sc), mock_semantic_score(sel, sc));
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
  EXPECT_EQ(remote.fallback_count(), 1u);
  EXPECT_THROW(RemoteScorer({"ftp://x", 1.0}), PreconditionError);
}

TEST(Reward, ModelCachesSemanticScore) {
  const auto sc = generate_scenario(2, 30, 5, ScenarioProfile::kUrbanCluster);
  RewardModel model(normalize_features(sc), {}, std::make_shared<MockScorer>());
  const std::vector<std::size_t> a{3, 1, 2, 7, 9}, b{1, 2, 3, 7, 9};
  const auto ra = model.evaluate(a, Stage::kThree);
  const auto rb = model.evaluate(b, Stage::kThree);
  EXPECT_EQ(ra.combined, rb.combined);
  EXPECT_EQ(model.cache_size(), 1u);
  EXPECT_DOUBLE_EQ(ra.combined, ra.r + ra.llm_score);
}

TEST(Reward, PlantedBeatsRandom) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sc = generate_scenario(seed, 100, 20, ScenarioProfile::kUrbanCluster);
    RewardModel model(normalize_features(sc), {}, std::make_shared<MockScorer>());
    const auto planted = sc.indices_of(*sc.planted_optimum);
    const double rp = model.evaluate(planted, Stage::kThree).r;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(sc.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(20);
    EXPECT_GE(rp, model.evaluate(idx, Stage::kThree).r) << "seed " << seed;
  }
}
