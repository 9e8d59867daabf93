#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "mtmkl/experiment.hpp"
#include "mtmkl/model_io.hpp"

using namespace mtmkl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mtmkl_test_experiment_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Three small native tasks plus a config; returns the config path.
fs::path write_workspace(const fs::path& dir, json overrides = json::object()) {
  std::mt19937_64 rng(17);
  json tasks = json::array();
  for (int t = 0; t < 3; ++t) {
    const TaskDataset ds = fixture::noisy_task(rng, 24, 2, "task" + std::to_string(t), 2.0);
    const std::string file = "task" + std::to_string(t) + ".txt";
    write_sparse_file(dir / file, ds.X, ds.y);
    tasks.push_back({{"name", ds.name}, {"path", file}});
  }
  std::ofstream(dir / "manifest.json") << json{{"feature_dim", 2}, {"construction", "native"}, {"tasks", tasks}}.dump();
  json config = {{"manifest", "manifest.json"},
                 {"kernels", {{{"type", "linear"}}, {{"type", "gaussian"}, {"spread", 1.0}}}},
                 {"train", {{"C", 1.0}, {"lambda", 0.1}}},
                 {"grid", {{"C", {0.5, 2.0}}, {"lambda", {0.01, 1.0}}}},
                 {"seed", 5},
                 {"threads", 2},
                 {"output_dir", "out"},
                 {"emit", {{"trace", true}, {"affinity", true}, {"bound", true}}}};
  config.merge_patch(overrides);
  std::ofstream(dir / "config.json") << config.dump(2);
  return dir / "config.json";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MTMKL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const fs::path dir = scratch_dir("config");
  const RunConfig c = load_run_config(write_workspace(dir));
  CHECK(c.manifest == dir / "manifest.json");
  CHECK(c.output_dir == dir / "out");
  CHECK(c.kernels.size() == 2);
  CHECK(c.kernels[1] == KernelSpec::Gaussian(1.0));
  CHECK(c.train.lambda == 0.1);
  CHECK(c.train.seed == 5);
  CHECK(c.grid.C == std::vector<double>{0.5, 2.0});
  CHECK(c.emit_bound);

  const json base = read_json(dir / "config.json");
  auto rejects = [&](json patch) {
    json j = base;
    j.merge_patch(patch);
    CHECK_THROWS_AS(run_config_from_json(j, dir), InputError);
  };
  rejects({{"typo", 1}});
  rejects({{"grid", {{"C", {0.0}}}}});
  rejects({{"grid", {{"lambda", {-1.0}}}}});
  rejects({{"grid", {{"C", json::array()}}}});
  rejects({{"kernels", json::array()}});
  rejects({{"kernels", {{{"type", "gaussian"}, {"spread", -1}}}}});
  rejects({{"mode", "both"}});
  rejects({{"train", {{"C", -1}}}});
  rejects({{"train", {{"admm", {{"projection", "fast"}}}}}});
  rejects({{"train", {{"admm", {{"gap_rel", -1e-6}}}}}});
  rejects({{"affinity_eps", 0}});
  json no_manifest = base;
  no_manifest.erase("manifest");
  CHECK_THROWS_AS(run_config_from_json(no_manifest, dir), InputError);

  const Grid g = Grid::Default();
  CHECK(g.C.size() * g.lambda.size() == 441);
  CHECK(g.C.front() == std::ldexp(1.0, -10));
  CHECK(g.lambda.back() == 1024.0);
}

TEST_CASE("mode overrides") {
  RunConfig c;
  c.mode = Mode::kStl;
  CHECK(c.effective_lambda(3.0) == 0.0);
  c.mode = Mode::kMtl;
  CHECK(c.effective_lambda(3.0) == 1e6);
  c.mode = Mode::kOurs;
  CHECK(c.effective_lambda(3.0) == 3.0);
  CHECK(parse_mode("stl") == Mode::kStl);
  CHECK(mode_name(Mode::kMtl) == "mtl");
}

TEST_CASE("task affinity") {
  ThetaMatrix one = Matrix::Constant(1, 3, 1.0 / 3);
  const Affinity single = task_affinity(one);
  CHECK(single.distances.rows() == 1);
  CHECK(single.distances(0, 0) == 0.0);
  CHECK(single.num_groups == 1);

  ThetaMatrix theta(4, 2);
  theta << 1, 0, 0, 1, 1, 0, 0.9995, 0.0005;
  const Affinity a = task_affinity(theta, 1e-3);
  CHECK(a.distances(0, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(a.distances(1, 0) == a.distances(0, 1));
  CHECK(a.group == std::vector<int>{0, 1, 0, 0});
  CHECK(a.num_groups == 2);

  // Chains link through intermediate tasks.
  ThetaMatrix chain(3, 1);
  chain << 0.0, 0.0008, 0.0016;
  CHECK(task_affinity(chain, 1e-3).num_groups == 1);
}

TEST_CASE("grid selection") {
  std::vector<GridPoint> points = {{1.0, 0.5, 0.8, std::nullopt},
                                   {0.5, 0.5, 0.8, std::nullopt},
                                   {2.0, 0.1, 0.8, std::nullopt},
                                   {4.0, 0.1, 0.7, std::nullopt},
                                   {8.0, 0.01, 0.9, std::string("failed")}};
  const GridPoint& best = select_grid_point(points);
  CHECK(best.C == 2.0);
  CHECK(best.lambda == 0.1);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(points.begin(), points.end(), rng);
    CHECK(select_grid_point(points).C == 2.0);
  }
  std::vector<GridPoint> failing = {{1.0, 1.0, 0.0, std::string("boom")}};
  CHECK_THROWS_AS(select_grid_point(failing), GridError);
}

TEST_CASE("model round trip") {
  const fs::path dir = scratch_dir("model");
  const RunResult r = run_train(load_run_config(write_workspace(dir)));
  const TrainedModel back = load_model(dir / "out" / "model.json");
  CHECK(model_to_json(back) == model_to_json(r.model));
  std::mt19937_64 rng(3);
  const Matrix X = fixture::random_matrix(rng, 5, 2);
  CHECK(decision_values(back, 1, X) == decision_values(r.model, 1, X));

  json doc = read_json(dir / "out" / "model.json");
  doc["version"] = 99;
  CHECK_THROWS_AS(model_from_json(doc), InputError);
  doc = read_json(dir / "out" / "model.json");
  doc["tasks"][0].erase("theta");
  CHECK_THROWS_AS(model_from_json(doc), InputError);
}

TEST_CASE("train report") {
  const fs::path dir = scratch_dir("train");
  const RunConfig config = load_run_config(write_workspace(dir));
  const RunResult first = run_train(config);
  const json& r = first.report;
  CHECK_NOTHROW(validate_report(r));
  CHECK(r["tasks"].size() == 3);
  CHECK(r["selected"]["lambda"] == 0.1);
  for (const char* f : {"report.json", "model.json", "trace.csv", "affinity.csv", "groups.csv"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
  CHECK(read_json(dir / "out" / "report.json") == r);
  CHECK(r.contains("bound"));
  CHECK(r["bound"]["gamma_source"] == "fusion_penalty");

  const std::string trace = slurp(dir / "out" / "trace.csv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == static_cast<long>(first.model.trace.size()) + 1);
  const std::string affinity = slurp(dir / "out" / "affinity.csv");
  CHECK(affinity.rfind("task,task0,task1,task2\n", 0) == 0);

  // Same seed twice: identical apart from timing.
  const std::string before = slurp(dir / "out" / "report.json");
  run_train(config);
  const std::string after = slurp(dir / "out" / "report.json");
  CHECK(without_timing(json::parse(before)).dump() == without_timing(json::parse(after)).dump());

  RunConfig stl = config;
  stl.mode = Mode::kStl;
  CHECK(run_train(stl).report["selected"]["lambda"] == 0.0);

  RunConfig mtl = config;
  mtl.mode = Mode::kMtl;
  const json mr = run_train(mtl).report;
  CHECK(mr["selected"]["lambda"] == 1e6);
  CHECK(mr["affinity"]["num_groups"] == 1);
  CHECK(mr["affinity"]["max_distance"].get<double>() <= 1e-3);
}

TEST_CASE("grid report") {
  const fs::path dir = scratch_dir("grid");
  RunConfig config = load_run_config(write_workspace(dir));
  const RunResult g = run_grid(config);
  CHECK_NOTHROW(validate_report(g.report));
  CHECK(g.report["grid"]["size"] == 4);
  CHECK(g.report["command"] == "grid");

  // A one-point grid reproduces plain training at that point.
  config.grid = {{2.0}, {1.0}};
  const RunResult single = run_grid(config);
  RunConfig direct = config;
  direct.train.C = 2.0;
  direct.train.lambda = 1.0;
  const RunResult trained = run_train(direct);
  CHECK(single.report["mean_test_accuracy"] == trained.report["mean_test_accuracy"]);
  CHECK(single.model.objective == trained.model.objective);

  config.mode = Mode::kStl;
  config.grid = {{0.5, 2.0}, {0.01, 1.0}};
  const RunResult stl = run_grid(config);
  CHECK(stl.report["grid"]["size"] == 2);
  CHECK(stl.report["selected"]["lambda"] == 0.0);
}

TEST_CASE("report validator") {
  const fs::path dir = scratch_dir("validator");
  const json good = run_train(load_run_config(write_workspace(dir))).report;
  auto broken = [&](auto mutate) {
    json r = good;
    mutate(r);
    CHECK_THROWS_AS(validate_report(r), InputError);
  };
  broken([](json& r) { r["format"] = "other"; });
  broken([](json& r) { r.erase("tasks"); });
  broken([](json& r) { r["tasks"][0]["test_accuracy"] = 1.5; });
  broken([](json& r) { r["mean_test_accuracy"] = r["mean_test_accuracy"].get<double>() * 0.5 + 0.01; });
  broken([](json& r) { r["mode"] = "stl"; });
  broken([](json& r) { r["command"] = "dance"; });
  broken([](json& r) { r["selected"]["C"] = 0; });
  CHECK_NOTHROW(validate_report(json::parse(good.dump())));
}

TEST_CASE("predict, affinity and bound commands") {
  const fs::path dir = scratch_dir("commands");
  run_train(load_run_config(write_workspace(dir)));
  const json p = run_predict(dir / "out" / "model.json", dir / "task1.txt", DataFormat::kSparse,
                             "task1", dir / "pred");
  CHECK(p["accuracy"].get<double>() >= 0.0);
  CHECK(fs::exists(dir / "pred" / "predictions.csv"));
  CHECK(run_predict(dir / "out" / "model.json", dir / "task1.txt", DataFormat::kSparse, "1",
                    dir / "pred")["task"] == "task1");
  CHECK_THROWS_AS(run_predict(dir / "out" / "model.json", dir / "task1.txt", DataFormat::kSparse,
                              "nope", dir / "pred"),
                  InputError);

  const json a = run_affinity(dir / "out" / "model.json", 1e-3, dir / "aff");
  CHECK(a["affinity"]["groups"].size() == 3);
  CHECK(fs::exists(dir / "aff" / "affinity.csv"));
  CHECK_THROWS_AS(run_affinity(dir / "out" / "model.json", 0.0, dir / "aff"), InputError);

  CHECK(run_bound(1, 1, 1, 1, 1, {})["bound"]["value"].get<double>() ==
        doctest::Approx(std::pow(3.0, 0.25)));
  CHECK_THROWS_AS(run_bound(1, 1, 0, 1, 1, {}), InputError);
}

TEST_CASE("command line") {
  const fs::path dir = scratch_dir("cli");
  const fs::path config = write_workspace(dir);
  const fs::path log = dir / "log.txt";
  const std::string out = (dir / "cli_out").string();

  CHECK(run_cli("train --config " + config.string() + " --output " + out + " --mode stl --threads 1", log) == 0);
  const json r = read_json(fs::path(out) / "report.json");
  CHECK(r["mode"] == "stl");
  CHECK(r["selected"]["lambda"] == 0.0);

  CHECK(run_cli("train --config " + config.string() + " --output " + out + " --lambda 0.5 --c 2 --rho 2 --seed 9", log) == 0);
  const json r2 = read_json(fs::path(out) / "report.json");
  CHECK(r2["selected"]["lambda"] == 0.5);
  CHECK(r2["selected"]["C"] == 2.0);
  CHECK(r2["seed"] == 9);
  CHECK(r2["config"]["train"]["rho"] == 2.0);

  CHECK(run_cli("grid --config " + config.string() + " --output " + out, log) == 0);
  CHECK(read_json(fs::path(out) / "report.json")["command"] == "grid");

  const std::string model = (fs::path(out) / "model.json").string();
  CHECK(run_cli("predict --model " + model + " --data " + (dir / "task0.txt").string() +
                    " --task task0 --output " + out + "/pred",
                log) == 0);
  CHECK(run_cli("affinity --model " + model + " --output " + out + "/aff", log) == 0);
  CHECK(fs::exists(fs::path(out) / "aff" / "affinity.csv"));
  CHECK(run_cli("bound --gamma 2 --R 1 --M 10 --n 100 --T 5", log) == 0);
  CHECK(std::stod(slurp(log)) == doctest::Approx(std::sqrt(std::sqrt(3.0) * 20 / 500)).epsilon(1e-15));

  // Error paths: non-zero exit and a structured message, no report.
  auto fails = [&](const std::string& args, const std::string& kind) {
    fs::remove_all(dir / "err");
    CHECK(run_cli(args, log) != 0);
    const json err = json::parse(slurp(log));
    CHECK(err["error"]["kind"] == kind);
    CHECK(!fs::exists(dir / "err" / "report.json"));
  };
  const std::string err = " --output " + (dir / "err").string();
  fails("train --config " + (dir / "absent.json").string() + err, "input_error");
  fails("train --config " + config.string() + " --c -1" + err, "input_error");
  fails("grid --config " + config.string() + " --lambda -1" + err, "input_error");
  fails("predict --model " + (dir / "absent.json").string() + " --data x --task 0" + err, "input_error");
  fails("affinity --model " + config.string() + err, "input_error");
  fails("bound --gamma 0 --R 1 --M 1 --n 1 --T 1" + err, "input_error");

  {
    std::ofstream(dir / "bad.txt") << "+1 2:1 1:1\n";
    std::ofstream(dir / "bad_manifest.json")
        << R"({"feature_dim": 2, "construction": "native", "tasks": [{"name": "bad", "path": "bad.txt"}]})";
    json c = read_json(config);
    c["manifest"] = "bad_manifest.json";
    std::ofstream(dir / "bad_config.json") << c.dump();
  }
  fails("train --config " + (dir / "bad_config.json").string() + err, "parse_error");
  {
    std::ofstream(dir / "tiny.txt") << "+1 1:1\n-1 1:2\n+1 1:3\n";
    std::ofstream(dir / "tiny_manifest.json")
        << R"({"feature_dim": 1, "construction": "native", "tasks": [{"name": "tiny", "path": "tiny.txt"}]})";
    json c = read_json(config);
    c["manifest"] = "tiny_manifest.json";
    std::ofstream(dir / "tiny_config.json") << c.dump();
  }
  fails("train --config " + (dir / "tiny_config.json").string() + err, "split_error");
  {
    std::ofstream(dir / "ovo.txt") << "0 1:1\n1 1:2\n";
    std::ofstream(dir / "ovo_manifest.json")
        << R"({"feature_dim": 1, "construction": {"one_vs_one": {"classes": [0, 5]}}, "tasks": [{"name": "x", "path": "ovo.txt"}]})";
    json c = read_json(config);
    c["manifest"] = "ovo_manifest.json";
    std::ofstream(dir / "ovo_config.json") << c.dump();
  }
  fails("train --config " + (dir / "ovo_config.json").string() + err, "construction_error");

  CHECK(run_cli("", log) == 2);
  CHECK(run_cli("train", log) == 2);
  CHECK(run_cli("train --config x --mode both", log) == 2);
}
