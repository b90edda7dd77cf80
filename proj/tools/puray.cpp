#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "puray/checkpoint.hpp"
#include "puray/io.hpp"
#include "puray/metrics.hpp"
#include "puray/network.hpp"
#include "puray/query_gen.hpp"
#include "puray/rng.hpp"
#include "puray/run_config.hpp"
#include "puray/sampling.hpp"
#include "puray/training.hpp"
#include "puray/upsampling.hpp"

namespace fs = std::filesystem;
using namespace puray;

namespace {

Point3 parse_point(const std::string& text, const std::string& flag) {
  Point3 p;
  char trailing;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &p.x, &p.y, &p.z, &trailing) != 3)
    throw CLI::ValidationError(flag, "expected x,y,z");
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

struct TrainArgs {
  std::string config, input, gt, out;
};

int run_train(const TrainArgs& a) {
  const TrainConfig cfg = parse_run_config(a.config);
  if (cfg.mode == TrainMode::supervised && a.gt.empty())
    throw CLI::RequiredError("--gt (supervised mode)");

  const PointCloud S = io::read_cloud(a.input);
  Rng origin_rng(cfg.seed, "origins");
  const std::size_t count_O =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.origins), S.size());
  const std::vector<Point3> origins =
      sample_ray_origins(S, count_O, origin_rng, cfg.net.k, cfg.origin_mode);

  QuerySet queries;
  if (cfg.mode == TrainMode::supervised) {
    const PointCloud GT = io::read_cloud(a.gt);
    queries = make_queries_supervised(S, GT, origins, cfg.net.k);
  } else {
    queries = make_queries_selfsup(S, origins, cfg.net.k, cfg.include_query_in_patch);
  }
  std::cout << "samples: " << queries.samples.size()
            << " (skipped " << queries.skipped_coincident << " coincident, "
            << queries.skipped_out_of_range << " out of range)\n";
  if (queries.samples.empty()) throw std::runtime_error("no usable training samples");

  fs::create_directories(a.out);
  const fs::path outdir(a.out);
  auto hook = [&](int epoch, const ad::ParamStore& params, const ad::AdamState& adam) {
    char name[64];
    std::snprintf(name, sizeof name, "ckpt_epoch_%03d.bin", epoch);
    save_checkpoint(outdir / name,
                    make_checkpoint(cfg.net, params, cfg.seed, epoch, &adam));
  };

  const TrainResult result = train(cfg, queries, hook);
  write_text(outdir / "train_log.csv", train_log_csv(result.log));
  save_checkpoint(outdir / "model.bin",
                  make_checkpoint(cfg.net, result.params, cfg.seed, result.last_epoch));

  if (result.aborted_nan)
    std::cerr << "warning: non-finite loss, stopped after epoch " << result.last_epoch
              << " and kept that epoch's parameters\n";
  const EpochRow& last = result.log.back();
  std::cout << "epochs completed: " << result.last_epoch << "\n"
            << "final train loss: " << last.total << " (mae " << last.l_mae << ", rmse "
            << last.l_rmse << ")\n"
            << "model: " << (outdir / "model.bin").string() << "\n"
            << "log: " << (outdir / "train_log.csv").string() << "\n";
  return result.aborted_nan ? 1 : 0;
}

struct UpsampleArgs {
  std::string ckpt, input, out, mode = "synthetic", sensor;
  double rate = 4.0;
  int origins = 128;
  std::optional<std::uint64_t> seed;
};

int run_upsample(const UpsampleArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.ckpt);
  const PointCloud S = io::read_cloud(a.input);

  UpsampleConfig cfg;
  cfg.rate = a.rate;
  cfg.origins = a.origins;
  cfg.seed = a.seed.value_or(ckpt.seed);
  if (a.mode == "synthetic") {
    cfg.mode = QueryMode::synthetic;
  } else if (a.mode == "realscan") {
    cfg.mode = QueryMode::realscan;
    if (a.sensor.empty()) throw CLI::RequiredError("--sensor (realscan mode)");
    cfg.sensor = parse_point(a.sensor, "--sensor");
  } else {
    throw CLI::ValidationError("--mode", "expected synthetic or realscan");
  }

  const UpsampleResult res = upsample(S, ckpt.params, ckpt.net, cfg);
  io::write_cloud(res.cloud, a.out);
  if (!res.warning.empty()) std::cerr << "warning: " << res.warning << "\n";
  std::cout << "input points: " << S.size() << "\n"
            << "emitted: " << res.emitted << ", rejected: " << res.rejected
            << ", skipped: " << res.skipped << "\n"
            << "output points: " << res.cloud.size() << " -> " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string pred, gt, mesh, report;
};

int run_eval(const EvalArgs& a) {
  const PointCloud pred = io::read_cloud(a.pred);
  const PointCloud gt = io::read_cloud(a.gt);
  std::optional<TriangleMesh> mesh;
  if (!a.mesh.empty()) mesh = io::read_off(a.mesh);
  const EvalReport report = evaluate(pred, gt, mesh ? &*mesh : nullptr);
  const std::string csv = eval_report_csv(report);
  std::cout << csv;
  if (!a.report.empty()) write_text(a.report, csv);
  return 0;
}

struct QuerygenArgs {
  std::string input, out, mode = "synthetic", sensor;
  double rate = 4.0;
};

int run_querygen(const QuerygenArgs& a) {
  const PointCloud S = io::read_cloud(a.input);
  QueryPlan plan;
  if (a.mode == "synthetic") {
    plan = gen_queries_synthetic(S, a.rate);
  } else if (a.mode == "realscan") {
    if (a.sensor.empty()) throw CLI::RequiredError("--sensor (realscan mode)");
    plan = gen_queries_realscan(S, parse_point(a.sensor, "--sensor"), a.rate);
  } else {
    throw CLI::ValidationError("--mode", "expected synthetic or realscan");
  }
  PointCloud out;
  out.points = plan.query_points;
  io::write_cloud(out, a.out);
  if (!plan.warning.empty()) std::cerr << "warning: " << plan.warning << "\n";
  std::cout << "queries: " << plan.query_points.size() << " (sources below target: "
            << plan.sources_below_target << ") -> " << a.out << "\n";
  return 0;
}

struct MarchDebugArgs {
  std::string ckpt, input, query, out;
  int origins = 128;
  std::optional<std::uint64_t> seed;
};

// One row per executed step plus a final offset row; see the README for the
// column layout.
int run_march_debug(const MarchDebugArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.ckpt);
  const PointCloud S = io::read_cloud(a.input);
  const Point3 q = parse_point(a.query, "--query");

  Rng origin_rng(a.seed.value_or(ckpt.seed), "origins");
  const std::size_t count_O =
      std::min<std::size_t>(static_cast<std::size_t>(a.origins), S.size());
  const std::vector<Point3> origins =
      sample_ray_origins(S, count_O, origin_rng, ckpt.net.k, OriginMode::axis_aligned);
  const QuerySample qs = build_query_sample(S, q, origins, ckpt.net.k, false);
  const MarchTrace trace = march(ckpt.params, ckpt.net, qs.patch, qs.ray.direction);

  std::string csv =
      "step,origin_x,origin_y,origin_z,t_m,t_tilde,"
      "nearest_x,nearest_y,nearest_z,n_x,n_y,n_z,eps,t_hat\n";
  char buf[512];
  double t_tilde = 0.0;
  for (std::size_t m = 0; m < trace.steps.size(); ++m) {
    const MarchStep& st = trace.steps[m];
    t_tilde += st.t;
    std::snprintf(buf, sizeof buf,
                  "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,,\n", m + 1,
                  st.origin.x, st.origin.y, st.origin.z, st.t, t_tilde, st.nearest.x,
                  st.nearest.y, st.nearest.z, st.n.x, st.n.y, st.n.z);
    csv += buf;
  }
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,,%.9g,,,,,,,%.9g,%.9g\n",
                trace.steps.size() + 1, trace.final_origin.x, trace.final_origin.y,
                trace.final_origin.z, trace.t_tilde, trace.eps, trace.t_hat);
  csv += buf;
  write_text(a.out, csv);
  std::cout << "steps executed: " << trace.steps.size()
            << (trace.truncated ? " (truncated)" : "") << ", t_hat: " << trace.t_hat << " -> "
            << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point cloud upsampling by per-ray surface depth prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "1.0.0");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "fit a model on one point cloud");
  train_cmd->add_option("--config", train_args.config, "key=value run configuration")
      ->required();
  train_cmd->add_option("--input", train_args.input, "sparse input cloud (.xyz/.ply)")
      ->required();
  train_cmd->add_option("--gt", train_args.gt, "dense cloud (supervised mode)");
  train_cmd->add_option("--out", train_args.out, "output directory")->required();

  UpsampleArgs up_args;
  CLI::App* up_cmd = app.add_subcommand("upsample", "densify a cloud with a trained model");
  up_cmd->add_option("--ckpt", up_args.ckpt, "model checkpoint")->required();
  up_cmd->add_option("--input", up_args.input, "sparse input cloud")->required();
  up_cmd->add_option("--rate", up_args.rate, "upsampling rate r")->required();
  up_cmd->add_option("--mode", up_args.mode, "synthetic|realscan (default synthetic)");
  up_cmd->add_option("--sensor", up_args.sensor, "sensor position x,y,z (realscan)");
  up_cmd->add_option("--origins", up_args.origins, "ray-origin count (default 128)");
  up_cmd->add_option("--seed", up_args.seed, "override the checkpoint seed");
  up_cmd->add_option("--out", up_args.out, "output cloud path")->required();

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "compare a cloud against ground truth");
  eval_cmd->add_option("--pred", eval_args.pred, "predicted cloud")->required();
  eval_cmd->add_option("--gt", eval_args.gt, "ground-truth cloud")->required();
  eval_cmd->add_option("--mesh", eval_args.mesh, "ground-truth mesh (.off) for p2f");
  eval_cmd->add_option("--report", eval_args.report, "also write the CSV here");

  QuerygenArgs qg_args;
  CLI::App* qg_cmd = app.add_subcommand("querygen", "emit query points without marching");
  qg_cmd->add_option("--input", qg_args.input, "sparse input cloud")->required();
  qg_cmd->add_option("--rate", qg_args.rate, "upsampling rate r")->required();
  qg_cmd->add_option("--mode", qg_args.mode, "synthetic|realscan (default synthetic)");
  qg_cmd->add_option("--sensor", qg_args.sensor, "sensor position x,y,z (realscan)");
  qg_cmd->add_option("--out", qg_args.out, "output cloud path")->required();

  MarchDebugArgs md_args;
  CLI::App* md_cmd = app.add_subcommand("march-debug", "dump one ray's marching trace");
  md_cmd->add_option("--ckpt", md_args.ckpt, "model checkpoint")->required();
  md_cmd->add_option("--input", md_args.input, "sparse input cloud")->required();
  md_cmd->add_option("--query", md_args.query, "query point x,y,z")->required();
  md_cmd->add_option("--origins", md_args.origins, "ray-origin count (default 128)");
  md_cmd->add_option("--seed", md_args.seed, "override the checkpoint seed");
  md_cmd->add_option("--out", md_args.out, "output CSV path")->required();

  int rc = 0;
  train_cmd->callback([&] { rc = run_train(train_args); });
  up_cmd->callback([&] { rc = run_upsample(up_args); });
  eval_cmd->callback([&] { rc = run_eval(eval_args); });
  qg_cmd->callback([&] { rc = run_querygen(qg_args); });
  md_cmd->callback([&] { rc = run_march_debug(md_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
