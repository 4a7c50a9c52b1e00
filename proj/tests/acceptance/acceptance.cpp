// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "../oracles.hpp"
#include "../run_cli.hpp"
#include "bgr/bgrm.hpp"
#include "bgr/gradsuite.hpp"
#include "bgr/graphs.hpp"
#include "bgr/kernels.hpp"
#include "bgr/reasoning.hpp"
#include "bgr/train.hpp"

using namespace bgr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Verdict gradient_suite_check() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = gradient_suite();
  const auto results = run_gradient_suite(cases, 1e-5, 1e-4);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::size_t pipelines = 0;
  for (const auto& r : results) {
    v.require(r.pass, r.op + " failed (max_rel_err " + fmt("%.3e", r.max_rel_err) + ")");
    worst = std::max(worst, r.max_rel_err);
    pipelines += r.op.rfind("pipeline.", 0) == 0;
  }
  v.require(pipelines == kAllGraphModes.size(), "end-to-end pipeline cases missing");
  v.require(secs < 60.0, "runtime " + fmt("%.1f", secs) + "s");
  if (v.pass)
    v.detail = std::to_string(results.size()) + " cases, worst err " + fmt("%.2e", worst) + ", " +
               fmt("%.2f", secs) + "s";
  return v;
}

Verdict class_center_check() {
  Verdict v;
  Rng rng(2024);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const auto w = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 16));
    const auto c = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const FeatureMap f(rng.normal_mat(n, h * w, 3.0), h, w);
    const ScoreMap s(rng.uniform_mat(c, h * w, -6.0, 6.0), h, w);
    const Mat centers = extract_class_centers(f, s).centers;
    const double err = oracle::max_diff(centers, oracle::class_centers(f.values(), s.values()));
    worst = std::max(worst, err);
    v.require(err <= 1e-9, "oracle gap " + fmt("%.3e", err) + " on instance " + std::to_string(i));
    for (std::size_t k = 0; k < n; ++k) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t p = 0; p < h * w; ++p) {
        lo = std::min(lo, f.values()(k, p));
        hi = std::max(hi, f.values()(k, p));
      }
      for (std::size_t r = 0; r < c; ++r)
        v.require(centers(r, k) >= lo - 1e-12 && centers(r, k) <= hi + 1e-12,
                  "convex bound broken on instance " + std::to_string(i));
    }
  }
  if (v.pass) v.detail = "50 instances, worst gap " + fmt("%.2e", worst);
  return v;
}

Verdict block_equivalence_check() {
  Verdict v;
  Rng rng(2025);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, 8));
    const auto s = static_cast<std::size_t>(rng.uniform_int(k == 0 ? 1 : 0, 8));
    const auto d = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto d0 = static_cast<std::size_t>(rng.uniform_int(1, 8));
    JointGraph g;
    g.n_thing = k;
    g.n_stuff = s;
    g.features = rng.normal_mat(k + s, d);
    g.adjacency = rng.uniform_mat(k + s, k + s, 0.0, 1.0);
    const ReasoningLayerParams p{rng.normal_mat(d, d0), rng.normal_mat(d, d0), {}};
    const double err = oracle::max_diff(
        reasoning_layer(g, p),
        oracle::reasoning_layer_blockwise(g.features, g.adjacency, k, p.w_thing, p.w_stuff));
    worst = std::max(worst, err);
    v.require(err <= 1e-9, "blockwise gap " + fmt("%.3e", err) + " on instance " + std::to_string(i));

    // shared weight: compare with the monolithic X ++ relu(A X W) on the tape
    const ReasoningLayerParams shared{p.w_thing, p.w_thing, {}};
    Tape tape;
    Var x = tape.constant(g.features);
    Var mono = ad::concat_cols(
        x, ad::relu(ad::matmul(ad::matmul(tape.constant(g.adjacency), x), tape.constant(p.w_thing))));
    const Mat layer = reasoning_layer(g, shared);
    const Mat expect = oracle::reasoning_layer_blockwise(g.features, g.adjacency, k, p.w_thing, p.w_thing);
    v.require(oracle::max_diff(layer, expect) <= 1e-9 && oracle::max_diff(layer, mono.value()) <= 1e-9,
              "shared-weight collapse fails on instance " + std::to_string(i));
  }
  if (v.pass) v.detail = "50 instances, worst gap " + fmt("%.2e", worst);
  return v;
}

bool allowed(ReasoningMode m, bool row_thing, bool col_thing) {
  if (row_thing == col_thing) return true;
  if (m == ReasoningMode::bidirectional) return true;
  if (m == ReasoningMode::thing_to_stuff) return !row_thing;
  if (m == ReasoningMode::stuff_to_thing) return row_thing;
  return false;
}

Verdict attention_check() {
  Verdict v;
  Rng rng(2026);
  const ReasoningMode modes[] = {ReasoningMode::bidirectional, ReasoningMode::thing_to_stuff,
                                 ReasoningMode::stuff_to_thing, ReasoningMode::disconnected};
  double worst = 0;
  std::size_t graphs = 0;
  for (int i = 0; i < 60; ++i) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 20));
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n)));
    const std::size_t s = n - k;
    const ReasoningMode mode = modes[i % 4];
    auto layers = init_reasoning_layers(6, 5, 2, 3, rng);
    v.require(layers[0].heads.size() == 3, "head count");
    ReasoningOptions o;
    o.mode = mode;
    const Mat xt = rng.normal_mat(k, 6, 2.0), xs = rng.normal_mat(s, 6, 2.0);
    const auto base = run_reasoning(xt, xs, layers, o);
    for (const Mat& a : base.adjacencies) {
      ++graphs;
      for (std::size_t r = 0; r < n; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < n; ++c) {
          sum += a(r, c);
          if (!allowed(mode, r < k, c < k))
            v.require(a(r, c) == 0.0, "masked entry nonzero in " + std::string(to_string(mode)));
        }
        worst = std::max(worst, std::abs(sum - 1.0));
        v.require(std::abs(sum - 1.0) <= 1e-10, "row sum off by " + fmt("%.3e", sum - 1.0));
      }
    }
    if (k == 0 || s == 0 || mode == ReasoningMode::bidirectional) continue;
    // literal independence: perturb the side a branch may not read
    const auto pt = run_reasoning(oracle::plus(xt, rng.normal_mat(k, 6)), xs, layers, o);
    const auto ps = run_reasoning(xt, oracle::plus(xs, rng.normal_mat(s, 6)), layers, o);
    if (!allowed(mode, false, true))
      v.require(pt.stuff == base.stuff, "stuff saw thing perturbation in " + std::string(to_string(mode)));
    if (!allowed(mode, true, false))
      v.require(ps.thing == base.thing, "thing saw stuff perturbation in " + std::string(to_string(mode)));
  }
  if (v.pass)
    v.detail = std::to_string(graphs) + " adjacencies, n in [1,20], 3 heads, worst row-sum gap " +
               fmt("%.1e", worst);
  return v;
}

Verdict pq_check() {
  Verdict v;
  Rng rng(2027);
  ClassTable table;
  for (int c = 0; c < 6; ++c) table[c] = {"", c >= 3};
  for (int i = 0; i < 100; ++i) {
    const PanopticMap gt = oracle::random_panoptic(8, 8, rng, 3, 3, 0.1);
    const PanopticMap pred = oracle::random_panoptic(8, 8, rng, 3, 3, 0.1);
    const PQStats stats = panoptic_stats(pred, gt, table);
    const auto expect = oracle::pq_counts(pred, gt);
    for (const auto& [cls, c] : expect) {
      const ClassStats got = stats.per_class.count(cls) ? stats.per_class.at(cls) : ClassStats{};
      v.require(got.tp == c.tp && got.fp == c.fp && got.fn == c.fn &&
                    std::abs(got.iou_sum - c.iou_sum) <= 1e-12,
                "count mismatch on scene " + std::to_string(i));
    }
    for (const auto& [cls, q] : summarize(stats, table).per_class)
      v.require(std::abs(q.pq - q.sq * q.rq) <= 1e-15, "PQ != SQ*RQ");
    if (!gt.segments.empty())
      v.require(panoptic_quality(gt, gt, table).all.pq == 1.0, "perfect prediction below 1");
  }
  if (v.pass) v.detail = "100 scenes match the brute-force counts";
  return v;
}

Verdict fusion_check() {
  Verdict v;
  Rng rng(2028);
  for (int i = 0; i < 100; ++i) {
    oracle::FusionCase c = oracle::random_fusion_case(rng, 10, 10, true);
    const FusionConfig cfg{0.3, 0.5, 2.0};
    const PanopticMap got = fuse(c.instances, c.semantic, cfg);
    v.require(got == oracle::fuse_greedy(c, 0.3, 0.5, 2.0), "oracle mismatch on set " + std::to_string(i));
    std::reverse(c.instances.begin(), c.instances.end());
    v.require(fuse(c.instances, c.semantic, cfg) == got, "order dependence on set " + std::to_string(i));
    for (std::size_t j = c.instances.size(); j > 1; --j)
      std::swap(c.instances[j - 1],
                c.instances[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j) - 1))]);
    v.require(fuse(c.instances, c.semantic, cfg) == got, "order dependence on set " + std::to_string(i));
  }
  if (v.pass) v.detail = "100 sets match the greedy simulation, permutation invariant";
  return v;
}

Verdict training_check() {
  Verdict v;
  const int threads = kernels::max_threads();
  kernels::set_thread_cap(1);
  TrainConfig cfg;  // defaults: 16 dims, 12x12, 200 iterations, lr 0.02, momentum 0.9, wd 5e-4
  cfg.eval_every = 0;
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream log_a, log_b;
  const TrainResult a = train(cfg, &log_a);
  const double secs = seconds_since(t0);
  const TrainResult b = train(cfg, &log_b);
  kernels::set_thread_cap(threads);
  v.require(!a.diverged, a.diagnostic);
  v.require(a.iterations.size() == 200, "ran " + std::to_string(a.iterations.size()) + " iterations");
  const double ratio = a.final_loss(cfg) / a.initial_loss(cfg);
  v.require(ratio <= 0.5, "final/initial loss " + fmt("%.3f", ratio));
  v.require(log_a.str() == log_b.str(), "two runs with seed 1 differ");
  v.require(secs < 300.0, "single-threaded runtime " + fmt("%.1f", secs) + "s");
  if (v.pass)
    v.detail = "loss " + fmt("%.4f", a.initial_loss(cfg)) + " -> " + fmt("%.4f", a.final_loss(cfg)) +
               " (ratio " + fmt("%.3f", ratio) + "), " + fmt("%.1f", secs) + "s on 1 thread, repeatable";
  return v;
}

Verdict ablation_check(const fs::path& work) {
  Verdict v;
  const fs::path out = work / "ablation";
  const auto run = cli_test::run("ablate --seed 1 -n 20 --out \"" + out.string() + "\"");
  v.require(run.code == 0, "bgr ablate exited " + std::to_string(run.code));
  json rows;
  if (v.pass) {
    rows = json::parse(cli_test::slurp(out / "ablation.json"))["rows"];
    std::set<std::string> modes;
    for (const auto& r : rows) {
      modes.insert(r["mode"].get<std::string>());
      v.require(r["seed"] == 1, "rows use different seeds");
    }
    std::set<std::string> expect;
    for (GraphMode m : kAllGraphModes) expect.insert(std::string(to_string(m)));
    v.require(modes == expect && rows.size() == 7, "table does not cover the 7 modes");
    v.require(fs::exists(out / "ablation.txt"), "missing ablation.txt");
  }

  // disconnected mode with zeroed graph weights against the visual-only heads
  ModelConfig mc;
  mc.mode = GraphMode::disconnected;
  ModelParams p = init_model(mc, 5);
  for (auto& layer : p.layers) {
    layer.w_thing = Mat(layer.w_thing.rows(), layer.w_thing.cols());
    layer.w_stuff = Mat(layer.w_stuff.rows(), layer.w_stuff.cols());
  }
  p.proj.w_intra_thing = Mat(p.proj.w_intra_thing.rows(), p.proj.w_intra_thing.cols());
  p.proj.w_intra_stuff = Mat(p.proj.w_intra_stuff.rows(), p.proj.w_intra_stuff.cols());
  const SceneConfig sc;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ToyScene s = generate_scene(sc, seed);
    Tape tape;
    const ModelOutput o = forward(tape, bind(tape, p, false), mc, s.features, s.coarse_scores, s.regions);
    v.require(o.thing_logits.value() == baseline_thing_logits(build_thing_nodes(s.regions), p.proj),
              "thing logits differ from baseline on scene " + std::to_string(seed));
    v.require(o.stuff_logits.value() == baseline_stuff_logits(s.features, p.proj),
              "stuff logits differ from baseline on scene " + std::to_string(seed));
  }
  if (v.pass) {
    std::string pqs;
    for (const auto& r : rows)
      pqs += (pqs.empty() ? "" : ", ") + r["mode"].get<std::string>() + " " +
             fmt("%.1f", 100.0 * r["PQ"].get<double>());
    v.detail = "7 modes [PQ: " + pqs + "]; zeroed disconnected == baseline bit-exact on 20 scenes";
  }
  return v;
}

Verdict determinism_check(const fs::path& work) {
  Verdict v;
  // formats
  Rng rng(2029);
  for (int i = 0; i < 20; ++i) {
    Mat m = rng.normal_mat(static_cast<std::size_t>(rng.uniform_int(0, 9)),
                           static_cast<std::size_t>(rng.uniform_int(0, 9)), 1e5);
    if (m.size() > 0) m[0] = i % 2 ? -0.0 : std::numeric_limits<double>::quiet_NaN();
    const auto bytes = encode_bgrm(m);
    v.require(encode_bgrm(decode_bgrm(bytes)) == bytes, "BGRM round trip");
    const PanopticMap pm = oracle::random_panoptic(7, 9, rng, 3, 3, 0.2);
    save_panoptic(work / "p.bgrp", pm);
    v.require(load_panoptic(work / "p.bgrp") == pm, "BGRP round trip");
    const auto first = cli_test::slurp(work / "p.bgrp") + cli_test::slurp(work / "p.bgrp.json");
    save_panoptic(work / "p.bgrp", load_panoptic(work / "p.bgrp"));
    v.require(cli_test::slurp(work / "p.bgrp") + cli_test::slurp(work / "p.bgrp.json") == first,
              "BGRP rewrite differs");
    const FeatureMap f(rng.normal_mat(3, 12), 3, 4);
    save_raster(work / "f.bgrm", f);
    v.require(load_raster(work / "f.bgrm").values() == f.values(), "raster round trip");
  }
  const EmbeddingTable emb = toy_embeddings(SceneConfig{});
  save_embeddings(work / "e.json", emb);
  const EmbeddingTable eb = load_embeddings(work / "e.json");
  v.require(eb.thing == emb.thing && eb.stuff == emb.stuff, "embedding round trip");

  // identical runs through the CLI
  const auto train = [&](const std::string& name) {
    return cli_test::run("train --seed 3 --mode cosine --out \"" + (work / name).string() + "\"").code;
  };
  v.require(train("a") == 0 && train("b") == 0, "bgr train failed");
  if (v.pass) {
    for (const auto& e : fs::directory_iterator(work / "a/checkpoint")) {
      const fs::path other = work / "b/checkpoint" / e.path().filename();
      if (e.path().filename() == "manifest.json") continue;
      v.require(cli_test::slurp(e.path()) == cli_test::slurp(other),
                "checkpoint file " + e.path().filename().string() + " differs");
    }
    v.require(cli_test::slurp(work / "a/train.jsonl") == cli_test::slurp(work / "b/train.jsonl"),
              "training logs differ");
    const ModelParams loaded = load_checkpoint(work / "a/checkpoint");
    save_checkpoint(work / "a2", loaded);
    for (const auto& [name, m] : loaded.named_tensors())
      v.require(cli_test::slurp(work / "a2" / (name + ".bgrm")) ==
                    cli_test::slurp(work / "a/checkpoint" / (name + ".bgrm")),
                "checkpoint rewrite differs for " + name);
    const auto eval = [&](const std::string& name) {
      return cli_test::run("eval -n 20 --checkpoint \"" + (work / name / "checkpoint").string() +
                           "\" --out \"" + (work / (name + ".json")).string() + "\"");
    };
    const auto ra = eval("a"), rb = eval("b");
    v.require(ra.code == 0 && rb.code == 0, "bgr eval failed");
    v.require(ra.out == rb.out && cli_test::slurp(work / "a.json") == cli_test::slurp(work / "b.json"),
              "eval reports differ");
  }
  if (v.pass) v.detail = "BGRM/BGRP/raster/embeddings/checkpoint round trips; repeated train+eval identical";
  return v;
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "bgr_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"gradient suite", gradient_suite_check},
      {"class-center oracle", class_center_check},
      {"reasoning block equivalence", block_equivalence_check},
      {"attention contract", attention_check},
      {"panoptic quality", pq_check},
      {"fusion", fusion_check},
      {"toy training", training_check},
      {"ablation shape", [&] { return ablation_check(work); }},
      {"determinism and formats", [&] { return determinism_check(work); }},
  };
  int failed = 0;
  int index = 1;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", index++, name, v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
