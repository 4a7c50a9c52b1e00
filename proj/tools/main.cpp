// bgr: gradient checks, toy training/evaluation, ablations and file tools.

#include <iostream>

#include <CLI11.hpp>

#include "bgr/errors.hpp"
#include "bgr/kernels.hpp"
#include "commands.hpp"

using namespace bgr::cli;

int main(int argc, char** argv) {
  bgr::kernels::apply_env_thread_cap();

  CLI::App app{"Bidirectional graph reasoning for panoptic segmentation (toy scale)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bgr 1.0");

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op");
  gradcheck->add_flag("--all", gc.all, "Run the whole suite");
  gradcheck->add_option("filter", gc.filter, "Op-name pattern ('*' and '?' wildcards)");
  gradcheck->add_option("--eps", gc.eps, "Central-difference step")->capture_default_str();
  gradcheck->add_option("--tol", gc.tol, "Largest allowed error")->capture_default_str();
  gradcheck->add_option("--seed", gc.seed, "Seed for suite inputs")->capture_default_str();
  gradcheck->add_flag("--corrupt", gc.corrupt)->group("");  // mutation fixture

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train on generated toy scenes");
  train->add_option("--config", tr.config, "JSON run config")->check(CLI::ExistingFile);
  train->add_option("--seed", tr.seed, "Overrides the config seed");
  train->add_option("--mode", tr.mode, "Graph mode (overrides the config)");
  train->add_option("--out", tr.out, "Output directory")->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Panoptic quality of a checkpoint on toy scenes");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("-n,--scenes", ev.scenes, "Number of scenes")->capture_default_str();
  eval->add_option("--seed", ev.seed, "Seed of the first scene")->capture_default_str();
  eval->add_option("--out", ev.out, "Write the full-precision report here");

  AblateArgs ab;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every graph mode");
  ablate->add_option("--config", ab.config, "JSON run config")->check(CLI::ExistingFile);
  ablate->add_option("--seed", ab.seed, "Training seed shared by all modes");
  ablate->add_option("--out", ab.out, "Output directory")->capture_default_str();
  ablate->add_option("-n,--scenes", ab.scenes, "Evaluation scenes")->capture_default_str();
  ablate->add_option("--eval-seed", ab.eval_seed, "Seed of the first evaluation scene")
      ->capture_default_str();

  SceneArgs sc;
  auto* scene = app.add_subcommand("scene", "Write one generated toy scene to files");
  scene->add_option("--config", sc.config, "JSON run config (its scene block is used)")
      ->check(CLI::ExistingFile);
  scene->add_option("--seed", sc.seed, "Scene seed")->capture_default_str();
  scene->add_option("--out", sc.out, "Output directory")->required();
  scene->add_option("--noise", sc.noise, "Sets feature, score and proposal noise");

  FuseArgs fu;
  auto* fuse = app.add_subcommand("fuse", "Combine instance masks and stuff labels");
  fuse->add_option("--instances", fu.instances, "Instances JSON")
      ->required()
      ->check(CLI::ExistingFile);
  fuse->add_option("--semantic", fu.semantic, "Stuff labels, BGRM H x W (negative = void)")
      ->required()
      ->check(CLI::ExistingFile);
  fuse->add_option("--out", fu.out, "Output panoptic map (.bgrp)")->required();
  fuse->add_option("--config", fu.config, "JSON fusion config")->check(CLI::ExistingFile);
  fuse->add_option("--score-thresh", fu.score_thresh);
  fuse->add_option("--keep-frac", fu.keep_frac);
  fuse->add_option("--min-stuff-area", fu.min_stuff_area);

  PqArgs pq;
  auto* pqc = app.add_subcommand("pq", "Panoptic quality between two panoptic maps");
  pqc->add_option("--pred", pq.pred, "Predicted map")->required()->check(CLI::ExistingFile);
  pqc->add_option("--gt", pq.gt, "Ground-truth map")->required()->check(CLI::ExistingFile);
  pqc->add_option("--out", pq.out, "Write the full-precision report here");

  CentersArgs ce;
  auto* centers = app.add_subcommand("centers", "Pixel similarity to one stuff class center");
  centers->add_option("--features", ce.features, "Feature raster (BGRM + sidecar)")
      ->required()
      ->check(CLI::ExistingFile);
  centers->add_option("--scores", ce.scores, "Coarse score raster (BGRM + sidecar)")
      ->required()
      ->check(CLI::ExistingFile);
  centers->add_option("--class", ce.class_id, "Stuff class index")->required();
  centers->add_option("--out", ce.out, "Output similarity raster")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gradcheck) return cmd_gradcheck(gc);
    if (*train) return cmd_train(tr);
    if (*eval) return cmd_eval(ev);
    if (*ablate) return cmd_ablate(ab);
    if (*scene) return cmd_scene(sc);
    if (*fuse) return cmd_fuse(fu);
    if (*pqc) return cmd_pq(pq);
    if (*centers) return cmd_centers(ce);
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const bgr::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kVerifyFailed;
  }
  return kUsage;
}
