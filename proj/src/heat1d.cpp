#include "bsms/heat1d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "bsms/bistride.hpp"
#include "bsms/error.hpp"
#include "bsms/train.hpp"

namespace bsms::heat1d {

using nlohmann::json;

void StickConfig::validate() const {
  if (nodes < 2) throw invalid_argument("heat1d: a stick needs at least 2 nodes");
  if (!(length > 0.0)) throw invalid_argument("heat1d: stick length must be positive");
  if (!(gap > 0.0) || gap >= spacing()) {
    throw invalid_argument("heat1d: gap must lie in (0, element spacing)");
  }
  if (!std::isfinite(t0) || !std::isfinite(q)) throw invalid_argument("heat1d: T0 and q must be finite");
}

std::vector<double> analytic_steady_state(const StickConfig& cfg) {
  cfg.validate();
  const double h = cfg.spacing();
  std::vector<double> t(static_cast<std::size_t>(cfg.nodes));
  for (int i = 0; i < cfg.nodes; ++i) {
    const int from_fixed = cfg.orientation == Orientation::LeftFixed ? i : cfg.nodes - 1 - i;
    t[i] = cfg.t0 + cfg.q * (from_fixed * h);
  }
  return t;
}

namespace {

struct Stick {
  std::vector<double> x;
  std::vector<int> type;
  std::vector<double> bc;
  std::vector<double> temperature;
};

Stick make_stick(const StickConfig& cfg, double offset) {
  Stick s;
  s.temperature = analytic_steady_state(cfg);
  const int n = cfg.nodes;
  const int fixed = cfg.orientation == Orientation::LeftFixed ? 0 : n - 1;
  const int flux = n - 1 - fixed;
  for (int i = 0; i < n; ++i) {
    s.x.push_back(offset + i * cfg.spacing());
    s.type.push_back(i == fixed ? kFixedEnd : i == flux ? kFluxEnd : kInterior);
    s.bc.push_back(i == fixed ? cfg.t0 : i == flux ? cfg.q : 0.0);
  }
  return s;
}

Case to_case(std::string name, const std::vector<Stick>& sticks) {
  Case c;
  c.name = std::move(name);
  std::vector<double> x, bc, temp;
  Index base = 0;
  for (const auto& s : sticks) {
    const auto n = static_cast<Index>(s.x.size());
    for (Index i = 0; i + 1 < n; ++i) c.mesh.cells.push_back({base + i, base + i + 1});
    x.insert(x.end(), s.x.begin(), s.x.end());
    bc.insert(bc.end(), s.bc.begin(), s.bc.end());
    temp.insert(temp.end(), s.temperature.begin(), s.temperature.end());
    c.mesh.node_type.insert(c.mesh.node_type.end(), s.type.begin(), s.type.end());
    base += n;
  }
  const auto n = static_cast<Eigen::Index>(x.size());
  c.mesh.positions = Eigen::Map<const Matrix>(x.data(), n, 1);
  FieldSample step;
  step.fields["bc"] = Eigen::Map<const Matrix>(bc.data(), n, 1);
  step.fields["temperature"] = Eigen::Map<const Matrix>(temp.data(), n, 1);
  c.trajectory.dt = 1.0;
  c.trajectory.steps.push_back(std::move(step));
  return c;
}

StickConfig oriented(const StickConfig& cfg, char label) {
  StickConfig c = cfg;
  c.orientation = label == 'A' ? Orientation::LeftFixed : Orientation::RightFixed;
  return c;
}

}  // namespace

std::vector<Case> gen_train(const StickConfig& cfg) {
  cfg.validate();
  return {to_case("A", {make_stick(oriented(cfg, 'A'), 0.0)}), to_case("B", {make_stick(oriented(cfg, 'B'), 0.0)})};
}

std::vector<Case> gen_test(const StickConfig& cfg) {
  cfg.validate();
  std::vector<Case> out;
  for (const char* name : {"AA", "AB", "BA", "BB"}) {
    out.push_back(to_case(name, {make_stick(oriented(cfg, name[0]), 0.0),
                                 make_stick(oriented(cfg, name[1]), cfg.length + cfg.gap)}));
  }
  return out;
}

bool symmetric_pair(const std::string& name) { return name == "AB" || name == "BA"; }

Adjacency proximity_edges(const Matrix& positions, double r, const Adjacency* exclude) {
  if (!(r > 0.0)) throw invalid_argument("proximity_edges: radius must be positive");
  const auto n = static_cast<Index>(positions.rows());
  if (exclude && exclude->size() != n) throw invalid_argument("proximity_edges: excluded adjacency size mismatch");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return positions(a, 0) < positions(b, 0); });
  std::vector<Edge> edges;
  const double r2 = r * r;
  for (std::size_t a = 0; a < order.size(); ++a) {
    const Index i = order[a];
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const Index j = order[b];
      if (positions(j, 0) - positions(i, 0) > r) break;
      if ((positions.row(i) - positions.row(j)).squaredNorm() > r2) continue;
      if (exclude && exclude->has_edge(i, j)) continue;
      edges.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  return build_adjacency(n, edges);
}

Hierarchy build_proximity_hierarchy(const Adjacency& adj, const Matrix& positions, int depth, double h) {
  if (depth < 1) throw invalid_argument("proximity hierarchy: depth must be at least 1");
  if (!(h > 0.0)) throw invalid_argument("proximity hierarchy: spacing must be positive");
  Hierarchy out = make_single_level(adj, positions);
  for (int l = 1; l < depth; ++l) {
    const Matrix& p = out.levels.back().positions;
    const double s = h * std::pow(2.0, l);
    std::map<std::vector<long long>, std::pair<double, Index>> nearest;
    for (Index i = 0; i < static_cast<Index>(p.rows()); ++i) {
      std::vector<long long> key;
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const long long k = std::llround(p(i, c) / s);
        key.push_back(k);
        d2 += std::pow(p(i, c) - static_cast<double>(k) * s, 2);
      }
      auto it = nearest.find(key);
      if (it == nearest.end() || d2 < it->second.first) nearest[key] = {d2, i};
    }
    PoolingPlan plan;
    for (const auto& [_, v] : nearest) plan.pooled.push_back(v.second);
    std::sort(plan.pooled.begin(), plan.pooled.end());
    const Matrix coarse = take_rows(p, plan.pooled);
    EnhancedLevel next{proximity_edges(coarse, 1.5 * s), std::nullopt};
    append_level(out, std::move(plan), std::move(next));
  }
  return out;
}

std::vector<Index> cross_cluster_edges(const Hierarchy& h) {
  const auto clusters = determine_clusters(h.levels.front().adjacency);
  std::vector<Index> label(static_cast<std::size_t>(h.levels.front().size()));
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (Index v : clusters[c]) label[v] = static_cast<Index>(c);
  }
  std::vector<Index> counts;
  for (int l = 0; l < h.depth(); ++l) {
    const auto origin = h.origin(l);
    Index count = 0;
    auto tally = [&](const Adjacency& a) {
      for (const auto& [i, j] : a.edges()) count += label[origin[i]] != label[origin[j]] ? 1 : 0;
    };
    tally(h.levels[l].adjacency);
    if (h.levels[l].contact) tally(*h.levels[l].contact);
    counts.push_back(count);
  }
  return counts;
}

ModelConfig model_config(int depth, int latent, int hidden) {
  ModelConfig cfg;
  cfg.latent = latent;
  cfg.hidden = hidden;
  cfg.depth = depth;
  cfg.dim = 1;
  cfg.node_types = kNodeTypes;
  cfg.inputs = {{"bc", 1}};
  cfg.outputs = {{"temperature", 1}};
  cfg.edge_sets = {EdgeSetSpec{true, false}};
  cfg.task = TaskMode::Steady;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Experiment

void DemoConfig::validate() const {
  stick.validate();
  if (depth < 1) throw invalid_argument("heat1d demo: depth must be at least 1");
  if (latent < 1 || hidden < 1) throw invalid_argument("heat1d demo: widths must be positive");
  if (max_epochs < 1 || check_every < 1) throw invalid_argument("heat1d demo: epoch counts must be positive");
  if (!(target_rmse > 0.0)) throw invalid_argument("heat1d demo: target_rmse must be positive");
  if (!(learning_rate > 0.0)) throw invalid_argument("heat1d demo: learning_rate must be positive");
}

json DemoConfig::to_json() const {
  return {{"nodes", stick.nodes},
          {"length", stick.length},
          {"t0", stick.t0},
          {"q", stick.q},
          {"gap", stick.gap},
          {"depth", depth},
          {"latent", latent},
          {"hidden", hidden},
          {"max_epochs", max_epochs},
          {"check_every", check_every},
          {"target_rmse", target_rmse},
          {"learning_rate", learning_rate},
          {"seed", seed}};
}

const CaseResult& VariantResult::find(const std::string& case_name) const {
  for (const auto& c : cases) {
    if (c.name == case_name) return c;
  }
  throw invalid_argument("heat1d: no test case named '" + case_name + "'");
}

namespace {

using Builder = std::function<Hierarchy(const Mesh&)>;

struct Prepared {
  Case source;
  Sample sample;
  std::shared_ptr<const Hierarchy> hierarchy;
};

Prepared prepare(const Case& c, const Builder& build, const ModelConfig& cfg) {
  auto h = std::make_shared<const Hierarchy>(build(c.mesh));
  auto graph = std::make_shared<const ModelGraph>(h, cfg);
  Dataset d = make_samples(c.mesh, c.trajectory, graph, cfg);
  return {c, std::move(d.front()), h};
}

double range_of(const Matrix& m) { return std::max(m.maxCoeff() - m.minCoeff(), 1e-12); }

Matrix predict(const BsmsParams& params, const Sample& s, const Normalizers& norm, const ModelConfig& cfg) {
  return norm.target.denormalize(model_forward(params, *s.graph, model_input(s, norm), cfg));
}

double relative_rmse(const BsmsParams& params, const std::vector<Prepared>& set, const Normalizers& norm,
                     const ModelConfig& cfg) {
  double sse = 0.0;
  double count = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : set) {
    const Matrix err = predict(params, p.sample, norm, cfg) - p.sample.target;
    sse += err.squaredNorm();
    count += static_cast<double>(err.size());
    lo = std::min(lo, p.sample.target.minCoeff());
    hi = std::max(hi, p.sample.target.maxCoeff());
  }
  return std::sqrt(sse / count) / std::max(hi - lo, 1e-12);
}

VariantResult run_variant(const std::string& name, const Builder& build, const DemoConfig& cfg,
                          const std::vector<Case>& train_cases, const std::vector<Case>& test_cases, const Logger& log) {
  const ModelConfig mcfg = model_config(cfg.depth, cfg.latent, cfg.hidden);
  std::vector<Prepared> train_set;
  for (const auto& c : train_cases) train_set.push_back(prepare(c, build, mcfg));
  Dataset data;
  for (const auto& p : train_set) data.push_back(p.sample);
  const Normalizers norm = fit_normalizers(data);

  BsmsParams params = init_model(mcfg, cfg.seed);
  TrainConfig tcfg;
  tcfg.epochs = cfg.max_epochs;
  tcfg.batch_size = static_cast<int>(data.size());
  tcfg.learning_rate = cfg.learning_rate;
  tcfg.seed = cfg.seed;

  VariantResult result;
  result.name = name;
  const auto report = train(params, data, norm, mcfg, tcfg, [&](int epoch, double loss, double lr) {
    result.epochs = epoch + 1;
    if ((epoch + 1) % cfg.check_every != 0) return true;
    const double rmse = relative_rmse(params, train_set, norm, mcfg);
    if (log) {
      log({{"event", "epoch"}, {"variant", name}, {"epoch", epoch + 1}, {"loss", loss}, {"lr", lr},
           {"train_rmse", rmse}});
    }
    return rmse > cfg.target_rmse;
  });
  result.loss = report.epoch_loss;
  result.train_rmse = relative_rmse(params, train_set, norm, mcfg);

  const int n = cfg.stick.nodes;
  for (const auto& c : test_cases) {
    const Prepared p = prepare(c, build, mcfg);
    const Matrix pred = predict(params, p.sample, norm, mcfg);
    const Matrix& truth = p.sample.target;
    const double range = range_of(truth);
    CaseResult r;
    r.name = c.name;
    r.symmetric = symmetric_pair(c.name);
    r.rmse = std::sqrt((pred - truth).squaredNorm() / static_cast<double>(truth.size())) / range;
    for (int i = n - 2; i <= n + 1; ++i) r.boundary_error = std::max(r.boundary_error, std::abs(pred(i, 0) - truth(i, 0)) / range);
    r.level_sizes = p.hierarchy->level_sizes();
    r.cross_edges = cross_cluster_edges(*p.hierarchy);
    r.prediction.assign(pred.data(), pred.data() + pred.size());
    r.truth.assign(truth.data(), truth.data() + truth.size());
    result.cases.push_back(std::move(r));
  }
  if (log) {
    log({{"event", "variant_done"}, {"variant", name}, {"epochs", result.epochs}, {"train_rmse", result.train_rmse}});
  }
  return result;
}

std::string fmt(double x, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

}  // namespace

DemoReport run_demo(const DemoConfig& cfg, const Logger& log) {
  cfg.validate();
  const auto train_cases = gen_train(cfg.stick);
  const auto test_cases = gen_test(cfg.stick);
  HierarchyOptions opts;
  opts.depth = cfg.depth;
  const Builder bistride = [opts](const Mesh& m) { return build_hierarchy(mesh_to_graph(m), m.positions, std::nullopt, opts); };
  const double h = cfg.stick.spacing();
  const int depth = cfg.depth;
  const Builder proximity = [depth, h](const Mesh& m) {
    return build_proximity_hierarchy(mesh_to_graph(m), m.positions, depth, h);
  };
  DemoReport report;
  report.config = cfg;
  report.variants.push_back(run_variant("bistride", bistride, cfg, train_cases, test_cases, log));
  report.variants.push_back(run_variant("proximity", proximity, cfg, train_cases, test_cases, log));
  return report;
}

json DemoReport::to_json() const {
  json variants_j = json::array();
  for (const auto& v : variants) {
    json cases = json::array();
    for (const auto& c : v.cases) {
      cases.push_back({{"name", c.name},
                       {"symmetric", c.symmetric},
                       {"rmse", c.rmse},
                       {"boundary_error", c.boundary_error},
                       {"level_sizes", c.level_sizes},
                       {"cross_cluster_edges", c.cross_edges},
                       {"prediction", c.prediction},
                       {"truth", c.truth}});
    }
    variants_j.push_back({{"name", v.name},
                          {"epochs", v.epochs},
                          {"train_rmse", v.train_rmse},
                          {"loss", v.loss},
                          {"cases", std::move(cases)}});
  }
  json ratios = json::object();
  if (variants.size() == 2) {
    for (const auto& c : variants[0].cases) {
      const double b = c.boundary_error;
      const double p = variants[1].find(c.name).boundary_error;
      ratios[c.name] = b > 0.0 ? p / b : 0.0;
    }
  }
  return {{"config", config.to_json()}, {"variants", std::move(variants_j)}, {"boundary_error_ratio", ratios}};
}

std::string DemoReport::to_csv() const {
  std::ostringstream os;
  os << "variant,case,symmetric,epochs,train_rmse,rmse,boundary_error,cross_cluster_edges\n";
  for (const auto& v : variants) {
    for (const auto& c : v.cases) {
      const Index cross = std::accumulate(c.cross_edges.begin(), c.cross_edges.end(), Index{0});
      os << v.name << "," << c.name << "," << (c.symmetric ? 1 : 0) << "," << v.epochs << ","
         << fmt(v.train_rmse, "%.17g") << "," << fmt(c.rmse, "%.17g") << "," << fmt(c.boundary_error, "%.17g") << ","
         << cross << "\n";
    }
  }
  return os.str();
}

std::string DemoReport::comparison_table() const {
  std::ostringstream os;
  os << "case  symmetric  bistride_boundary  proximity_boundary  ratio   bistride_cross  proximity_cross\n";
  if (variants.size() != 2) return os.str();
  for (const auto& b : variants[0].cases) {
    const auto& p = variants[1].find(b.name);
    const Index bc = std::accumulate(b.cross_edges.begin(), b.cross_edges.end(), Index{0});
    const Index pc = std::accumulate(p.cross_edges.begin(), p.cross_edges.end(), Index{0});
    char line[160];
    std::snprintf(line, sizeof line, "%-5s %-10s %-18.4f %-19.4f %-7.2f %-15d %d\n", b.name.c_str(),
                  b.symmetric ? "yes" : "no", b.boundary_error, p.boundary_error,
                  b.boundary_error > 0 ? p.boundary_error / b.boundary_error : 0.0, bc, pc);
    os << line;
  }
  os << "train_rmse  bistride " << fmt(variants[0].train_rmse, "%.4f") << " (" << variants[0].epochs
     << " epochs)  proximity " << fmt(variants[1].train_rmse, "%.4f") << " (" << variants[1].epochs << " epochs)\n";
  return os.str();
}

std::string DemoReport::to_svg() const {
  const double pw = 360, ph = 220, margin = 40;
  std::ostringstream os;
  const int cols = 2;
  const auto& cases = variants.empty() ? std::vector<CaseResult>{} : variants.front().cases;
  const int rows = static_cast<int>((cases.size() + 1) / 2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * (pw + margin) + margin << "\" height=\""
     << rows * (ph + margin) + margin << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const char* colors[] = {"#1f77b4", "#d62728"};
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const double ox = margin + static_cast<double>(k % cols) * (pw + margin);
    const double oy = margin + static_cast<double>(k / cols) * (ph + margin);
    const auto& truth = cases[k].truth;
    double lo = *std::min_element(truth.begin(), truth.end());
    double hi = *std::max_element(truth.begin(), truth.end());
    for (const auto& v : variants) {
      const auto& p = v.find(cases[k].name).prediction;
      lo = std::min(lo, *std::min_element(p.begin(), p.end()));
      hi = std::max(hi, *std::max_element(p.begin(), p.end()));
    }
    const double pad = 0.05 * std::max(hi - lo, 1e-12);
    lo -= pad;
    hi += pad;
    const auto n = truth.size();
    auto px = [&](std::size_t i) { return ox + pw * static_cast<double>(i) / static_cast<double>(n - 1); };
    auto py = [&](double y) { return oy + ph * (1.0 - (y - lo) / (hi - lo)); };
    auto polyline = [&](const std::vector<double>& ys, const char* color, const char* dash) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash << " points=\"";
      for (std::size_t i = 0; i < ys.size(); ++i) os << fmt(px(i), "%.2f") << "," << fmt(py(ys[i]), "%.2f") << " ";
      os << "\"/>\n";
    };
    os << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << ox << "\" y=\"" << oy - 6 << "\">" << cases[k].name
       << (cases[k].symmetric ? " (symmetric)" : " (non-symmetric)") << "</text>\n";
    polyline(truth, "#000000", " stroke-dasharray=\"4 3\"");
    for (std::size_t v = 0; v < variants.size() && v < 2; ++v) polyline(variants[v].find(cases[k].name).prediction, colors[v], "");
  }
  const double ly = rows * (ph + margin) + margin - 12;
  os << "<text x=\"" << margin << "\" y=\"" << ly << "\">dashed: analytic</text>\n";
  for (std::size_t v = 0; v < variants.size() && v < 2; ++v) {
    os << "<text x=\"" << margin + 120 + 120 * static_cast<double>(v) << "\" y=\"" << ly << "\" fill=\"" << colors[v]
       << "\">" << variants[v].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace bsms::heat1d
