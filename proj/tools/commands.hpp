#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace bgr::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kVerifyFailed = 1;
inline constexpr int kUsage = 2;

struct GradcheckArgs {
  bool all = false;
  std::string filter;
  double eps = 1e-5;
  double tol = 1e-4;
  std::uint64_t seed = 1;
  bool corrupt = false;
};

struct TrainArgs {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::filesystem::path out = "bgr-run";
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::size_t scenes = 20;
  std::uint64_t seed = 1000;
  std::optional<std::filesystem::path> out;
};

struct AblateArgs {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "bgr-ablation";
  std::size_t scenes = 20;
  std::uint64_t eval_seed = 1000;
};

struct SceneArgs {
  std::optional<std::filesystem::path> config;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::optional<double> noise;
};

struct FuseArgs {
  std::filesystem::path instances;
  std::filesystem::path semantic;
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
  std::optional<double> score_thresh;
  std::optional<double> keep_frac;
  std::optional<double> min_stuff_area;
};

struct PqArgs {
  std::filesystem::path pred;
  std::filesystem::path gt;
  std::optional<std::filesystem::path> out;
};

struct CentersArgs {
  std::filesystem::path features;
  std::filesystem::path scores;
  std::size_t class_id = 0;
  std::filesystem::path out;
};

int cmd_gradcheck(const GradcheckArgs& a);
int cmd_train(const TrainArgs& a);
int cmd_eval(const EvalArgs& a);
int cmd_ablate(const AblateArgs& a);
int cmd_scene(const SceneArgs& a);
int cmd_fuse(const FuseArgs& a);
int cmd_pq(const PqArgs& a);
int cmd_centers(const CentersArgs& a);

}  // namespace bgr::cli
