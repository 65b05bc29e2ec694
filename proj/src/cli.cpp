#include "bsms/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsms/error.hpp"
#include "bsms/heat1d.hpp"
#include "bsms/hierarchy.hpp"
#include "bsms/mesh_io.hpp"
#include "bsms/model.hpp"
#include "bsms/train.hpp"

namespace bsms::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// JSON object config: keys are long option names, arrays give repeated values.
class JsonConfig : public CLI::Config {
 public:
  /// Subcommand the keys belong to.
  std::string section;

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json out = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->get_lnames().front() == "config" || opt->get_lnames().front() == "help") {
        continue;
      }
      const auto& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& res = opt->results();
        out[name] = res.size() == 1 ? json(res.front()) : json(res);
      } else if (default_also && !opt->get_default_str().empty()) {
        out[name] = opt->get_default_str();
      }
    }
    return out.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      if (!section.empty()) item.parents = {section};
      item.name = key;
      auto add = [&](const json& v) {
        if (v.is_string()) {
          item.inputs.push_back(v.get<std::string>());
        } else if (v.is_boolean()) {
          item.inputs.push_back(v.get<bool>() ? "true" : "false");
        } else if (v.is_number() || v.is_null()) {
          item.inputs.push_back(v.dump());
        } else {
          throw CLI::ConversionError("config key '" + key + "' must hold a scalar or a list of scalars");
        }
      };
      if (value.is_array()) {
        for (const auto& v : value) add(v);
      } else {
        add(value);
      }
      items.push_back(std::move(item));
    }
    return items;
  }
};

void log_line(const json& record) { std::cerr << record.dump() << "\n"; }

void log_info(const std::string& event, json fields = json::object()) {
  fields["level"] = "info";
  fields["event"] = event;
  log_line(fields);
}

void write_text(const std::string& text, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw io_error("failed writing '" + path.string() + "'");
}

std::vector<FieldBinding> parse_bindings(const std::vector<std::string>& specs) {
  std::vector<FieldBinding> out;
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    FieldBinding b{s.substr(0, colon), 1};
    if (colon != std::string::npos) {
      try {
        b.width = std::stoi(s.substr(colon + 1));
      } catch (const std::exception&) {
        throw invalid_argument("field binding '" + s + "' must look like name:width");
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

struct HierarchyFlags {
  int depth = 0;
  std::string heuristic = "minave";
  std::string parity = "even";
  std::string contact;

  void add(CLI::App* app, bool with_depth) {
    if (with_depth) {
      app->add_option("--depth", depth, "Number of levels (0 picks floor(log2 n) - 3, at least 1)")->check(CLI::NonNegativeNumber);
    }
    app->add_option("--heuristic", heuristic, "Seeding heuristic: minave | closecenter")->capture_default_str();
    app->add_option("--parity", parity, "BFS frontier parity to pool: even | odd")->capture_default_str();
    app->add_option("--contact", contact, "Contact edge list JSON for the finest level");
  }

  Hierarchy build(const Mesh& mesh, int levels) const {
    HierarchyOptions opts;
    opts.depth = levels > 0 ? levels : suggest_depth(mesh.size());
    opts.heuristic = parse_heuristic(heuristic);
    opts.parity = parse_parity(parity);
    const Adjacency adj = mesh_to_graph(mesh);
    std::optional<Adjacency> c;
    if (!contact.empty()) {
      const auto edges = load_edge_list(contact);
      c = build_adjacency(mesh.size(), edges);
    }
    return build_hierarchy(adj, mesh.positions, c, opts);
  }
};

// ---------------------------------------------------------------------------
// build

struct BuildCmd {
  std::string mesh;
  std::string out;
  HierarchyFlags h;

  void setup(CLI::App* app) {
    app->add_option("--mesh", mesh, "Mesh JSON")->required();
    app->add_option("--out", out, "Hierarchy JSON to write")->required();
    h.add(app, true);
  }

  int run() const {
    const Mesh m = load_mesh(mesh);
    const Hierarchy hier = h.build(m, h.depth);
    export_hierarchy(hier, out);
    log_info("build", {{"levels", hier.depth()}, {"sizes", hier.level_sizes()}, {"out", out}});
    return 0;
  }
};

// ---------------------------------------------------------------------------
// gen-heat1d

void add_stick_flags(CLI::App* app, heat1d::StickConfig& s) {
  app->add_option("--nodes", s.nodes, "Nodes per stick")->capture_default_str();
  app->add_option("--length", s.length, "Stick length")->capture_default_str();
  app->add_option("--t0", s.t0, "Fixed end temperature")->capture_default_str();
  app->add_option("--q", s.q, "Fixed end flux")->capture_default_str();
  app->add_option("--gap", s.gap, "Gap between the sticks of the test layout")->capture_default_str();
}

struct GenHeatCmd {
  std::string out_dir;
  heat1d::StickConfig stick;

  void setup(CLI::App* app) {
    app->add_option("--out-dir", out_dir, "Directory for the generated meshes and trajectories")->required();
    add_stick_flags(app, stick);
  }

  int run() const {
    auto emit = [&](const std::string& prefix, const heat1d::Case& c) {
      const fs::path base = fs::path(out_dir) / (prefix + "_" + c.name);
      save_mesh(c.mesh, base.string() + ".mesh.json");
      save_trajectory(c.trajectory, base.string() + ".traj.json");
    };
    const auto train = heat1d::gen_train(stick);
    const auto test = heat1d::gen_test(stick);
    for (const auto& c : train) emit("train", c);
    for (const auto& c : test) emit("test", c);
    log_info("gen-heat1d", {{"train", train.size()}, {"test", test.size()}, {"out_dir", out_dir}});
    return 0;
  }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
  std::vector<std::string> meshes;
  std::vector<std::string> trajectories;
  std::string hierarchy;
  std::string model_config;
  std::string out;
  HierarchyFlags h;
  // Model overrides.
  int latent = 0;
  int hidden = 0;
  int depth = 0;
  int node_types = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string transition;
  std::string task;
  bool no_skip = false;
  // Optimizer.
  TrainConfig t;
  std::vector<std::string> noise;
  int log_every = 10;

  void setup(CLI::App* app) {
    app->add_option("--mesh", meshes, "Mesh JSON; repeat to pair with each --trajectory, or give once")->required();
    app->add_option("--trajectory", trajectories, "Trajectory JSON/NDJSON; repeatable")->required();
    app->add_option("--hierarchy", hierarchy, "Precomputed hierarchy JSON (single mesh only)");
    app->add_option("--model-config", model_config, "Model config JSON");
    app->add_option("--out", out, "Checkpoint JSON to write")->required();
    h.add(app, false);
    app->add_option("--depth", depth, "Hierarchy depth (overrides the model config)");
    app->add_option("--latent", latent, "Latent width");
    app->add_option("--hidden", hidden, "Hidden width of every MLP");
    app->add_option("--node-types", node_types, "Number of node types in the one-hot encoding");
    app->add_option("--inputs", inputs, "Input fields as name:width");
    app->add_option("--outputs", outputs, "Output fields as name:width");
    app->add_option("--transition", transition, "Transition: weighted | none | graphconv");
    app->add_option("--task", task, "Task: steady | delta | next");
    app->add_flag("--no-skip", no_skip, "Disable the U-Net skip connections");
    app->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch-size", t.batch_size, "Samples per update")->capture_default_str();
    app->add_option("--lr", t.learning_rate, "Initial learning rate")->capture_default_str();
    app->add_option("--decay", t.decay, "Learning rate factor per decay interval")->capture_default_str();
    app->add_option("--decay-every", t.decay_every, "Epochs per decay interval (0: a third of the run)")
        ->capture_default_str();
    app->add_option("--noise", noise, "Input noise as field=std; repeatable");
    app->add_option("--seed", t.seed, "Random seed")->envname("BSMS_SEED")->capture_default_str();
    app->add_option("--log-every", log_every, "Epochs between log records")->capture_default_str();
  }

  ModelConfig resolve_config(const Mesh& first) const {
    ModelConfig cfg;
    if (!model_config.empty()) cfg = ModelConfig::from_json(read_json_file(model_config));
    cfg.dim = first.dim();
    if (depth > 0) cfg.depth = depth;
    if (latent > 0) cfg.latent = latent;
    if (hidden > 0) cfg.hidden = hidden;
    if (node_types > 0) cfg.node_types = node_types;
    if (!inputs.empty()) cfg.inputs = parse_bindings(inputs);
    if (!outputs.empty()) cfg.outputs = parse_bindings(outputs);
    if (!transition.empty()) cfg.transition = parse_transition_mode(transition);
    if (!task.empty()) cfg.task = parse_task_mode(task);
    if (no_skip) cfg.skip_connections = false;
    if (!h.contact.empty() && cfg.edge_sets.size() < 2) cfg.edge_sets.push_back(EdgeSetSpec{});
    cfg.validate();
    return cfg;
  }

  int run() {
    if (meshes.size() != 1 && meshes.size() != trajectories.size()) {
      throw invalid_argument("train: give one --mesh or one per --trajectory");
    }
    if (!hierarchy.empty() && meshes.size() != 1) throw invalid_argument("train: --hierarchy needs a single --mesh");
    for (const auto& spec : noise) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw invalid_argument("noise '" + spec + "' must look like field=std");
      try {
        t.noise[spec.substr(0, eq)] = std::stod(spec.substr(eq + 1));
      } catch (const std::exception&) {
        throw invalid_argument("noise '" + spec + "' has a non-numeric scale");
      }
    }
    t.validate();

    std::vector<Mesh> mesh_data;
    for (const auto& m : meshes) mesh_data.push_back(load_mesh(m));
    const ModelConfig cfg = resolve_config(mesh_data.front());

    std::vector<std::shared_ptr<const ModelGraph>> graphs;
    for (const auto& m : mesh_data) {
      auto hier = std::make_shared<const Hierarchy>(hierarchy.empty() ? h.build(m, cfg.depth) : import_hierarchy(hierarchy));
      graphs.push_back(std::make_shared<const ModelGraph>(hier, cfg));
    }
    Dataset data;
    for (std::size_t k = 0; k < trajectories.size(); ++k) {
      const std::size_t mi = meshes.size() == 1 ? 0 : k;
      const Trajectory traj = load_trajectory(trajectories[k]);
      auto samples = make_samples(mesh_data[mi], traj, graphs[mi], cfg);
      for (auto& s : samples) data.push_back(std::move(s));
    }
    const Normalizers norm = fit_normalizers(data);
    BsmsParams params = init_model(cfg, t.seed);
    log_info("train_start", {{"samples", data.size()}, {"parameters", params.parameter_count()},
                             {"levels", graphs.front()->hierarchy().level_sizes()}});
    const auto report = train(params, data, norm, cfg, t, [&](int epoch, double loss, double lr) {
      if (log_every > 0 && ((epoch + 1) % log_every == 0 || epoch + 1 == t.epochs)) {
        log_info("epoch", {{"epoch", epoch + 1}, {"loss", loss}, {"lr", lr}});
      }
      return true;
    });
    json ckpt = checkpoint_to_json({cfg, norm, params});
    ckpt["train"] = t.to_json();
    ckpt["loss"] = report.epoch_loss;
    write_json_file(ckpt, out);
    log_info("train_done", {{"final_loss", report.epoch_loss.back()}, {"out", out}});
    return 0;
  }
};

// ---------------------------------------------------------------------------
// rollout

FieldSample split_fields(const Matrix& rows, const std::vector<FieldBinding>& bindings) {
  FieldSample s;
  int col = 0;
  for (const auto& b : bindings) {
    s.fields[b.name] = rows.middleCols(col, b.width);
    col += b.width;
  }
  return s;
}

struct RolloutCmd {
  std::string checkpoint;
  std::string mesh;
  std::string trajectory;
  std::string hierarchy;
  std::string out;
  HierarchyFlags h;
  int start = 0;
  int steps = -1;

  void setup(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Checkpoint JSON from `train`")->required();
    app->add_option("--mesh", mesh, "Mesh JSON")->required();
    app->add_option("--trajectory", trajectory, "Trajectory holding the initial state")->required();
    app->add_option("--hierarchy", hierarchy, "Precomputed hierarchy JSON");
    app->add_option("--out", out, "Predicted trajectory JSON to write")->required();
    h.add(app, false);
    app->add_option("--start", start, "Step of --trajectory used as the initial state")->capture_default_str();
    app->add_option("--steps", steps, "Steps to roll out (default: to the end of --trajectory, 1 for steady)");
  }

  int run() const {
    const json raw = read_json_file(checkpoint);
    const Checkpoint ck = checkpoint_from_json(raw);
    const Mesh m = load_mesh(mesh);
    const Trajectory traj = load_trajectory(trajectory);
    traj.validate();
    if (start < 0 || static_cast<std::size_t>(start) >= traj.size()) {
      throw invalid_argument("rollout: --start " + std::to_string(start) + " outside the trajectory");
    }
    int n = steps;
    if (n < 0) n = ck.model.task == TaskMode::Steady ? 1 : static_cast<int>(traj.size()) - 1 - start;
    auto hier = std::make_shared<const Hierarchy>(hierarchy.empty() ? h.build(m, ck.model.depth) : import_hierarchy(hierarchy));
    auto graph = std::make_shared<const ModelGraph>(hier, ck.model);
    std::vector<int> types = m.node_type;
    if (types.empty()) types.assign(static_cast<std::size_t>(m.size()), 0);
    const StepFunction step = model_step(ck.params, graph, one_hot_types(types, ck.model.node_types), m.positions, ck.norm, ck.model);
    const auto pred = rollout(step, gather_fields(traj.steps[start], ck.model.inputs), ck.model, n);
    Trajectory outt;
    outt.dt = traj.dt;
    for (const auto& p : pred) outt.steps.push_back(split_fields(p, ck.model.outputs));
    save_trajectory(outt, out);
    log_info("rollout", {{"steps", n}, {"start", start}, {"out", out}});
    return 0;
  }
};

// ---------------------------------------------------------------------------
// eval

struct EvalCmd {
  std::string pred;
  std::string truth;
  std::vector<std::string> fields;
  int truth_offset = 0;
  std::string out_json;
  std::string out_csv;

  void setup(CLI::App* app) {
    app->add_option("--pred", pred, "Predicted trajectory")->required();
    app->add_option("--truth", truth, "Ground-truth trajectory")->required();
    app->add_option("--fields", fields, "Fields to compare (default: every predicted field)");
    app->add_option("--truth-offset", truth_offset,
                    "Truth step matching prediction step 0 (1 for delta/next rollouts started at step 0)")
        ->capture_default_str();
    app->add_option("--out-json", out_json, "Metrics JSON to write")->required();
    app->add_option("--out-csv", out_csv, "Metrics CSV to write");
  }

  int run() const {
    const Trajectory p = load_trajectory(pred);
    const Trajectory t = load_trajectory(truth);
    p.validate();
    t.validate();
    if (p.size() == 0) throw invalid_argument("eval: prediction has no steps");
    if (truth_offset < 0 || t.size() < p.size() + static_cast<std::size_t>(truth_offset)) {
      throw invalid_argument("eval: truth has " + std::to_string(t.size()) + " steps, need " +
                             std::to_string(p.size() + static_cast<std::size_t>(std::max(truth_offset, 0))));
    }
    std::vector<FieldBinding> bindings;
    if (fields.empty()) {
      for (const auto& [name, m] : p.steps.front().fields) bindings.push_back({name, static_cast<int>(m.cols())});
    } else {
      for (const auto& f : fields) bindings.push_back({f, static_cast<int>(p.steps.front().field(f).cols())});
    }
    std::vector<Matrix> a, b;
    for (std::size_t k = 0; k < p.size(); ++k) {
      a.push_back(gather_fields(p.steps[k], bindings));
      b.push_back(gather_fields(t.steps[k + static_cast<std::size_t>(truth_offset)], bindings));
    }
    const Metrics m = eval_metrics(a, b);
    write_json_file(m.to_json(), out_json);
    if (!out_csv.empty()) write_text(m.to_csv(), out_csv);
    log_info("eval", {{"rmse_1", m.rmse_1}, {"rmse_50", m.rmse_50}, {"rmse_all", m.rmse_all},
                      {"horizon_50", m.horizon_50}});
    return 0;
  }
};

// ---------------------------------------------------------------------------
// demo-heat1d

struct DemoCmd {
  std::string out_dir;
  heat1d::DemoConfig cfg;
  bool svg = false;

  void setup(CLI::App* app) {
    app->add_option("--out-dir", out_dir, "Directory for metrics.json, metrics.csv and heat1d.svg")->required();
    add_stick_flags(app, cfg.stick);
    app->add_option("--depth", cfg.depth, "Hierarchy depth")->capture_default_str();
    app->add_option("--latent", cfg.latent, "Latent width")->capture_default_str();
    app->add_option("--hidden", cfg.hidden, "Hidden width")->capture_default_str();
    app->add_option("--max-epochs", cfg.max_epochs, "Epoch budget per variant")->capture_default_str();
    app->add_option("--check-every", cfg.check_every, "Epochs between training-error checks")->capture_default_str();
    app->add_option("--target-rmse", cfg.target_rmse, "Training RMSE target as a fraction of the range")
        ->capture_default_str();
    app->add_option("--lr", cfg.learning_rate, "Initial learning rate")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Random seed")->envname("BSMS_SEED")->capture_default_str();
    app->add_flag("--svg", svg, "Also write heat1d.svg with the test profiles");
  }

  int run() const {
    const auto report = heat1d::run_demo(cfg, [](const json& r) {
      json rec = r;
      rec["level"] = "info";
      log_line(rec);
    });
    const fs::path dir(out_dir);
    write_json_file(report.to_json(), dir / "metrics.json");
    write_text(report.to_csv(), dir / "metrics.csv");
    if (svg) write_text(report.to_svg(), dir / "heat1d.svg");
    std::cout << report.comparison_table();
    return 0;
  }
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return 2;
    case ErrorKind::Io:
      return 3;
    case ErrorKind::Numerical:
      return 4;
  }
  return 1;
}

int fail(const std::string& kind, const std::string& message, int code) {
  log_line({{"level", "error"}, {"kind", kind}, {"message", message}, {"exit", code}});
  return code;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Bi-stride multi-scale graph hierarchies and message passing", "bsms"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bsms 0.1.0");
  auto config = std::make_shared<JsonConfig>();
  app.config_formatter(config);
  app.set_config("--config", "", "JSON file of option values; flags given on the command line win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();

  BuildCmd build;
  GenHeatCmd gen;
  TrainCmd train_cmd;
  RolloutCmd roll;
  EvalCmd eval;
  DemoCmd demo;
  std::function<int()> action;

  auto sub = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* s = app.add_subcommand(name, help);
    s->footer("  --config FILE               JSON object of option values keyed by long flag name;\n"
              "                              unknown keys are rejected, command-line flags win");
    cmd.setup(s);
    s->callback([&action, &cmd] { action = [&cmd] { return cmd.run(); }; });
  };
  sub("build", "Build a bi-stride hierarchy from a mesh", build);
  sub("gen-heat1d", "Write the 1-D heat stick training and test cases", gen);
  sub("train", "Train a model on one or more trajectories", train_cmd);
  sub("rollout", "Roll a trained model forward from an initial state", roll);
  sub("eval", "Compare a predicted trajectory with ground truth", eval);
  sub("demo-heat1d", "Train bi-stride and proximity variants on the heat sticks and compare", demo);

  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.empty() || arg[0] == '-') continue;
    bool known = false;
    for (const CLI::App* s : app.get_subcommands({})) known = known || s->get_name() == arg;
    if (!known) {
      std::cerr << app.help();
      return fail("usage", "unknown subcommand '" + arg + "'", 2);
    }
    config->section = arg;
    break;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    return fail("usage", e.what(), 2);
  }
  try {
    return action ? action() : 0;
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}

}  // namespace bsms::cli
