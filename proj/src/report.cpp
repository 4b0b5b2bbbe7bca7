#include "dcies/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include "dcies/io.hpp"

namespace dcies {

using nlohmann::json;
namespace fs = std::filesystem;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json score_report_to_json(const ScoreReport& s) {
  json per_factor = json::array();
  for (const auto& f : s.per_factor)
    per_factor.push_back({{"index", f.index},
                          {"name", f.name},
                          {"C", f.C},
                          {"I", f.I},
                          {"E", f.E},
                          {"aulcc", f.aulcc},
                          {"best_index", f.best_index},
                          {"best_loss", f.best_loss}});
  json per_code = json::array();
  for (const auto& c : s.per_code)
    per_code.push_back({{"index", c.index}, {"D", c.D}, {"weight", c.weight}, {"dead", c.dead}});
  json verdict{{"class", to_string(s.verdict.verdict)},
               {"near_permutation", s.verdict.near_permutation},
               {"flags", s.verdict.flags},
               {"caveat", s.verdict.caveat}};
  verdict["permutation"] = s.verdict.permutation ? json(*s.verdict.permutation) : json(nullptr);
  json by_scale = json::object();
  for (const auto& [scale, E] : s.explicitness_by_scale) by_scale[scale] = E;
  return {{"D", s.D},
          {"C", s.C},
          {"I", s.I},
          {"E", s.E},
          {"S", s.S},
          {"E_by_scale", by_scale},
          {"per_factor", per_factor},
          {"per_code", per_code},
          {"verdict", verdict},
          {"flags", s.flags}};
}

json run_to_json(const RunResult& r) {
  json j = score_report_to_json(r.scores);
  j["representation"] = r.representation;
  j["probe"] = to_string(r.probe);
  j["seed"] = r.seed;
  json diag = json::array();
  for (const auto& d : r.importance_diagnostics)
    diag.push_back({{"method", d.method},
                    {"zero_mass", d.zero_mass},
                    {"degenerate_forest", d.degenerate_forest},
                    {"not_converged", d.not_converged},
                    {"clamped_fraction", d.clamped_fraction},
                    {"permutations", d.permutations},
                    {"evals", d.evals}});
  std::vector<std::vector<double>> R;
  for (Index i = 0; i < r.importance.values.rows(); ++i) {
    std::vector<double> row;
    for (Index k = 0; k < r.importance.values.cols(); ++k) row.push_back(r.importance.values(i, k));
    R.push_back(std::move(row));
  }
  j["provenance"] = {{"importance_method", r.importance.probe_tag},
                     {"importance", R},
                     {"importance_diagnostics", diag},
                     {"capacity_scales", [&] {
                        json s = json::array();
                        for (const auto& c : r.curves) s.push_back(to_string(c.scale));
                        return s;
                      }()}};
  return j;
}

RunResult run_from_json(const json& j) {
  RunResult r;
  r.representation = j.at("representation").get<std::string>();
  r.probe = parse_probe_class(j.at("probe").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.scores.D = j.at("D").get<double>();
  r.scores.C = j.at("C").get<double>();
  r.scores.I = j.at("I").get<double>();
  r.scores.E = j.at("E").get<double>();
  r.scores.S = j.at("S").get<double>();
  return r;
}

namespace {

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

json scores_to_json(const std::vector<RunResult>& runs, const std::vector<Aggregate>& aggregates,
                    const std::vector<RunFailure>& failures, const std::string& generated_at) {
  json doc;
  doc["schema_version"] = kScoresSchemaVersion;
  if (!generated_at.empty()) doc["generated_at"] = generated_at;
  doc["runs"] = json::array();
  for (const auto& r : runs) doc["runs"].push_back(run_to_json(r));
  doc["aggregates"] = json::array();
  for (const auto& a : aggregates)
    doc["aggregates"].push_back({{"representation", a.representation},
                                 {"probe", to_string(a.probe)},
                                 {"n_seeds", a.n_seeds},
                                 {"D", stat_json(a.D)},
                                 {"C", stat_json(a.C)},
                                 {"I", stat_json(a.I)},
                                 {"E", stat_json(a.E)},
                                 {"S", stat_json(a.S)},
                                 {"verdicts", a.verdicts}});
  doc["failures"] = json::array();
  for (const auto& f : failures)
    doc["failures"].push_back(
        {{"representation", f.representation}, {"probe", to_string(f.probe)}, {"seed", f.seed}, {"error", f.error}});
  return doc;
}

std::string curves_csv(const std::vector<RunResult>& runs) {
  std::string out = "representation,probe,seed,factor,capacity,capacity_scale,normalized_loss\n";
  for (const auto& r : runs)
    for (const auto& sc : r.curves)
      for (const auto& c : sc.curves) {
        const auto name = static_cast<std::size_t>(c.factor) < r.factor_names.size()
                              ? r.factor_names[static_cast<std::size_t>(c.factor)]
                              : std::to_string(c.factor);
        for (std::size_t t = 0; t < c.capacities.size(); ++t) {
          out += r.representation + ',' + to_string(r.probe) + ',' + std::to_string(r.seed) + ',' + name + ',' +
                 io::format_double(c.capacities[t]) + ',' + to_string(sc.scale) + ',' +
                 io::format_double(c.losses[t]) + '\n';
        }
      }
  return out;
}

json correlations_to_json(const CorrelationReport& c) {
  json doc{{"schema_version", kScoresSchemaVersion}, {"caveat", c.caveat}, {"entries", json::array()}};
  for (const auto& e : c.entries)
    doc["entries"].push_back({{"score", e.score},
                              {"scoring_probe", e.scoring_probe},
                              {"downstream_probe", e.downstream_probe},
                              {"task_type", e.task_type},
                              {"n", e.n},
                              {"pearson", e.pearson},
                              {"pearson_p", e.pearson_p},
                              {"spearman", e.spearman},
                              {"spearman_p", e.spearman_p}});
  return doc;
}

json downstream_to_json(const std::vector<DownstreamRecord>& d) {
  json doc{{"schema_version", kScoresSchemaVersion}, {"records", json::array()}};
  for (const auto& r : d)
    doc["records"].push_back({{"representation", r.representation},
                              {"probe", to_string(r.probe)},
                              {"seed", r.seed},
                              {"regression", r.regression},
                              {"classification", r.classification},
                              {"mean", r.mean},
                              {"per_task", r.per_task}});
  return doc;
}

std::vector<DownstreamRecord> downstream_from_json(const json& j) {
  std::vector<DownstreamRecord> out;
  for (const auto& e : j.at("records")) {
    DownstreamRecord r;
    r.representation = e.at("representation").get<std::string>();
    r.probe = parse_probe_class(e.at("probe").get<std::string>());
    r.seed = e.at("seed").get<std::uint64_t>();
    r.regression = e.at("regression").get<double>();
    r.classification = e.at("classification").get<double>();
    r.mean = e.at("mean").get<double>();
    r.per_task = e.at("per_task").get<std::vector<double>>();
    out.push_back(std::move(r));
  }
  return out;
}

json ladder_result_to_json(const LadderResult& lr) {
  json entries = json::array();
  for (const auto& e : lr.ladder.entries)
    entries.push_back({{"capacity", e.capacity},
                       {"hidden_width", e.hidden_width},
                       {"max_depth", e.max_depth},
                       {"n_features", e.n_features}});
  json factors = json::array();
  for (const auto& fl : lr.factors) {
    json raw = json::array(), norm = json::array();
    for (const auto& l : fl.losses) {
      raw.push_back(l.raw);
      norm.push_back(l.normalized);
    }
    factors.push_back({{"factor", fl.factor},
                       {"raw_loss", raw},
                       {"normalized_loss", norm},
                       {"capacities", fl.capacities},
                       {"seeds", fl.seeds},
                       {"best_index", fl.best_index},
                       {"best_loss", fl.best_loss}});
  }
  return {{"schema_version", kScoresSchemaVersion},
          {"probe_class", to_string(lr.ladder.probe_class)},
          {"scale", to_string(lr.ladder.scale)},
          {"entries", entries},
          {"factors", factors}};
}

LadderResult ladder_result_from_json(const json& j) {
  if (j.value("schema_version", 0) != kScoresSchemaVersion) throw SchemaMismatch("unsupported ladder record version");
  LadderResult lr;
  lr.ladder.probe_class = parse_probe_class(j.at("probe_class").get<std::string>());
  lr.ladder.scale = parse_capacity_scale(j.at("scale").get<std::string>());
  for (const auto& e : j.at("entries"))
    lr.ladder.entries.push_back(LadderEntry{e.at("capacity").get<double>(), e.at("hidden_width").get<int>(),
                                            e.at("max_depth").get<int>(), e.at("n_features").get<long long>()});
  for (const auto& f : j.at("factors")) {
    FactorLadder fl;
    fl.factor = f.at("factor").get<Index>();
    const auto raw = f.at("raw_loss").get<std::vector<double>>();
    const auto norm = f.at("normalized_loss").get<std::vector<double>>();
    for (std::size_t t = 0; t < raw.size(); ++t) fl.losses.push_back(ProbeLoss{fl.factor, t, raw[t], norm[t]});
    fl.capacities = f.at("capacities").get<std::vector<double>>();
    fl.seeds = f.at("seeds").get<std::vector<std::uint64_t>>();
    fl.probes.resize(raw.size());
    fl.best_index = f.at("best_index").get<std::size_t>();
    fl.best_loss = f.at("best_loss").get<double>();
    lr.factors.push_back(std::move(fl));
  }
  return lr;
}

namespace {

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Mean over factors, per rung.
std::pair<std::vector<double>, std::vector<double>> factor_mean(const ScaledCurves& sc) {
  std::vector<double> x, y;
  if (sc.curves.empty()) return {x, y};
  const std::size_t T = sc.curves.front().capacities.size();
  x.assign(T, 0.0);
  y.assign(T, 0.0);
  for (const auto& c : sc.curves)
    for (std::size_t t = 0; t < T; ++t) {
      x[t] += c.capacities[t];
      y[t] += c.losses[t];
    }
  for (std::size_t t = 0; t < T; ++t) {
    x[t] /= static_cast<double>(sc.curves.size());
    y[t] /= static_cast<double>(sc.curves.size());
  }
  return {x, y};
}

}  // namespace

std::string loss_capacity_svg(const std::vector<const RunResult*>& runs, std::size_t scale_index,
                              const std::string& title) {
  const double W = 520, H = 360, ml = 60, mr = 20, mt = 36, mb = 48;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> lines;
  std::string scale_name;
  for (const auto* r : runs) {
    if (scale_index >= r->curves.size()) continue;
    scale_name = to_string(r->curves[scale_index].scale);
    lines.push_back(factor_mean(r->curves[scale_index]));
  }
  double xmin = 0.0, xmax = 1.0;
  bool first = true;
  for (const auto& [x, y] : lines)
    for (double v : x) {
      if (first) {
        xmin = xmax = v;
        first = false;
      }
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double v) { return mt + (1.0 - std::clamp(v, 0.0, 1.0)) * (H - mt - mb); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << escape_xml(title) << "</text>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    s << "<text x=\"" << ml - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
      << "font-size=\"10\">" << fmt(v, 2) << "</text>\n";
    const double xv = xmin + v * (xmax - xmin);
    s << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 14 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"10\">" << fmt(xv) << "</text>\n";
  }
  s << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">capacity (" << escape_xml(scale_name)
    << ")</text>\n";
  s << "<text x=\"14\" y=\"" << (mt + H - mb) / 2 << "\" transform=\"rotate(-90 14 " << (mt + H - mb) / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">normalized loss</text>\n";

  auto polyline = [&](const std::vector<double>& x, const std::vector<double>& y, const char* colour, double width) {
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width << "\" points=\"";
    for (std::size_t t = 0; t < x.size(); ++t) s << (t ? " " : "") << fmt(px(x[t]), 6) << ',' << fmt(py(y[t]), 6);
    s << "\"/>\n";
  };
  for (const auto& [x, y] : lines) polyline(x, y, "#9bb7d4", 1.0);
  if (!lines.empty()) {
    std::vector<double> mx(lines.front().first.size(), 0.0), my(mx.size(), 0.0);
    for (const auto& [x, y] : lines)
      for (std::size_t t = 0; t < mx.size() && t < x.size(); ++t) {
        mx[t] += x[t] / static_cast<double>(lines.size());
        my[t] += y[t] / static_cast<double>(lines.size());
      }
    polyline(mx, my, "#1f4e79", 2.0);
  }
  s << "</svg>\n";
  return s.str();
}

void emit_report(const ExperimentResult& result, const fs::path& output_dir, const ReportOptions& opts) {
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create " + output_dir.string() + ": " + ec.message());
  const auto doc = scores_to_json(result.runs, result.aggregates, result.failures,
                                  opts.timestamp ? utc_timestamp() : std::string{});
  io::write_text(output_dir / "scores.json", doc.dump(2) + "\n");
  io::write_text(output_dir / "curves.csv", curves_csv(result.runs));
  if (!result.downstream.empty())
    io::write_text(output_dir / "downstream.json", downstream_to_json(result.downstream).dump(2) + "\n");
  if (result.correlations)
    io::write_text(output_dir / "correlations.json", correlations_to_json(*result.correlations).dump(2) + "\n");
  if (!opts.plots) return;

  std::vector<std::pair<std::string, ProbeClass>> keys;
  for (const auto& r : result.runs)
    if (std::find(keys.begin(), keys.end(), std::make_pair(r.representation, r.probe)) == keys.end())
      keys.emplace_back(r.representation, r.probe);
  for (const auto& [rep, probe] : keys) {
    std::vector<const RunResult*> group;
    for (const auto& r : result.runs)
      if (r.representation == rep && r.probe == probe) group.push_back(&r);
    for (std::size_t k = 0; k < group.front()->curves.size(); ++k) {
      const std::string scale = to_string(group.front()->curves[k].scale);
      const auto name = rep + "_" + to_string(probe) + "_" + scale + ".svg";
      io::write_text(output_dir / "plots" / name,
                     loss_capacity_svg(group, k, rep + " / " + to_string(probe) + " probes"));
    }
  }
}

}  // namespace dcies
