#include "diamt/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "diamt/cluster.hpp"

namespace fs = std::filesystem;

namespace diamt {
namespace {

std::ofstream open_csv(const std::string& out_dir, const std::string& name,
                       const std::string& header) {
  std::ofstream out(fs::path(out_dir) / name);
  if (!out) throw RuntimeFailure("cannot write: " + name);
  out << header << '\n';
  return out;
}

std::string at(const std::string& out_dir, const std::string& name) {
  return (fs::path(out_dir) / name).string();
}

}  // namespace

void report_dendrogram(const ParallelCorpus& corpus, const std::string& out_dir) {
  const Matrix dist = chrf_distance_matrix(corpus);
  const Dendrogram dendro = average_linkage(dist, corpus.varieties);
  svg_dendrogram(at(out_dir, "dendrogram.svg"),
                 "Variety clustering (100 - chrF++)", dendro);
  std::ofstream nw(at(out_dir, "newick.txt"));
  nw << to_newick(dendro) << '\n';
  auto csv = open_csv(out_dir, "distance_matrix.csv", "variety_a,variety_b,distance");
  for (std::size_t i = 0; i < corpus.varieties.size(); ++i)
    for (std::size_t j = 0; j < corpus.varieties.size(); ++j)
      csv << corpus.varieties[i] << ',' << corpus.varieties[j] << ','
          << dist(i, j) << '\n';
}

void report_anchored(const std::vector<std::vector<AnchoredDistance>>& per_layer,
                     const std::string& anchor, const std::string& out_dir) {
  if (per_layer.empty()) throw ConfigError("report_anchored: no layers");
  auto csv = open_csv(out_dir, "anchored_distances.csv", "layer,variety,l2,cosine");
  std::map<std::string, Series> l2, cos;
  for (std::size_t layer = 0; layer < per_layer.size(); ++layer)
    for (const auto& d : per_layer[layer]) {
      csv << layer << ',' << d.variety << ',' << d.l2 << ',' << d.cosine << '\n';
      if (d.variety == anchor) continue;
      l2[d.variety].label = d.variety;
      l2[d.variety].xs.push_back(static_cast<double>(layer));
      l2[d.variety].ys.push_back(d.l2);
      cos[d.variety].label = d.variety;
      cos[d.variety].xs.push_back(static_cast<double>(layer));
      cos[d.variety].ys.push_back(d.cosine);
    }
  std::vector<Series> l2s, coss;
  for (auto& [_, s] : l2) l2s.push_back(std::move(s));
  for (auto& [_, s] : cos) coss.push_back(std::move(s));
  svg_line_chart(at(out_dir, "anchored_l2.svg"),
                 "L2 distance to " + anchor + " by layer", "layer", "L2", l2s);
  svg_line_chart(at(out_dir, "anchored_cosine.svg"),
                 "Cosine distance to " + anchor + " by layer", "layer",
                 "1 - cos", coss);
}

void report_layer_correlation(const std::vector<double>& layer_r,
                              const std::string& out_dir) {
  if (layer_r.empty()) throw ConfigError("report_layer_correlation: no layers");
  auto csv = open_csv(out_dir, "layer_correlation.csv", "layer,pearson_r");
  Series s;
  s.label = "pearson r";
  for (std::size_t i = 0; i < layer_r.size(); ++i) {
    csv << i << ',' << layer_r[i] << '\n';
    s.xs.push_back(static_cast<double>(i));
    s.ys.push_back(layer_r[i]);
  }
  svg_line_chart(at(out_dir, "layer_correlation.svg"),
                 "Distance-vs-chrF++ correlation by layer", "layer", "r", {s});
}

void report_generation_scores(const GenerationEval& eval,
                              const std::string& out_dir) {
  if (eval.per_variety.empty())
    throw ConfigError("report_generation_scores: empty eval");
  auto csv = open_csv(out_dir, "generation_chrf.csv", "variety,chrf");
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const auto& [variety, score] : eval.per_variety) {
    csv << variety << ',' << score << '\n';
    labels.push_back(variety);
    values.push_back(score);
  }
  svg_bar_chart(at(out_dir, "generation_chrf.svg"), "Generation chrF++",
                labels, {"chrF++"}, {values});
}

void report_fertility(
    const std::vector<std::pair<std::string, double>>& fertility_by_variety,
    const std::string& out_dir) {
  if (fertility_by_variety.empty())
    throw ConfigError("report_fertility: no varieties");
  auto csv = open_csv(out_dir, "fertility.csv", "variety,fertility");
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const auto& [variety, f] : fertility_by_variety) {
    csv << variety << ',' << f << '\n';
    labels.push_back(variety);
    values.push_back(f);
  }
  svg_bar_chart(at(out_dir, "fertility.svg"), "Tokenizer fertility by variety",
                labels, {"pieces/word"}, {values});
}

void report_code_length(const AnalysisResult& analysis,
                        const std::string& standard_id,
                        const std::string& out_dir) {
  auto csv = open_csv(out_dir, "code_length.csv", "step,variety,bits_per_token");
  std::map<std::string, Series> by_variety;
  for (const auto& row : analysis.rows)
    for (const auto& [variety, bits] : row.code_bits) {
      csv << row.step << ',' << variety << ',' << bits << '\n';
      by_variety[variety].label = variety;
      by_variety[variety].xs.push_back(static_cast<double>(row.step));
      by_variety[variety].ys.push_back(bits);
    }
  (void)standard_id;
  std::vector<Series> series;
  for (auto& [_, s] : by_variety) series.push_back(std::move(s));
  svg_line_chart(at(out_dir, "code_length.svg"),
                 "Code length across checkpoints", "step", "bits/token", series);
}

void report_ssa(const AnalysisResult& analysis, const std::string& standard_id,
                const std::string& out_dir) {
  auto csv = open_csv(out_dir, "ssa.csv", "step,variety,ssa_degrees,chrf");
  std::map<std::string, Series> curves;
  Series scatter;
  scatter.label = "(ssa, chrf)";
  for (const auto& row : analysis.rows)
    for (const auto& [variety, angle] : row.ssa_vs_standard) {
      const auto it = row.chrf.find(variety);
      csv << row.step << ',' << variety << ',' << angle << ',';
      if (it != row.chrf.end()) csv << it->second;
      csv << '\n';
      if (variety == standard_id) continue;
      curves[variety].label = variety;
      curves[variety].xs.push_back(static_cast<double>(row.step));
      curves[variety].ys.push_back(angle);
      if (it != row.chrf.end()) {
        scatter.xs.push_back(angle);
        scatter.ys.push_back(it->second);
      }
    }
  std::vector<Series> series;
  for (auto& [_, s] : curves) series.push_back(std::move(s));
  svg_line_chart(at(out_dir, "ssa.svg"),
                 "SSA(" + standard_id + ", dialect) across checkpoints", "step",
                 "degrees", series);
  if (!scatter.xs.empty()) {
    char title[96];
    std::snprintf(title, sizeof title, "SSA vs chrF++ (pooled r = %.3f)",
                  analysis.pearson_ssa_chrf);
    svg_line_chart(at(out_dir, "ssa_vs_chrf.svg"), title, "SSA degrees",
                   "chrF++", {scatter});
  }
}

void report_training_curves(const MetricsLog& log, const std::string& out_dir,
                            const std::string& prefix) {
  if (log.rows.empty()) throw ConfigError("report_training_curves: empty log");
  Series lm{"lm_loss", {}, {}}, dec{"decouple_loss", {}, {}},
      val{"validation_loss", {}, {}};
  for (const auto& row : log.rows) {
    const double x = static_cast<double>(row.step);
    lm.xs.push_back(x);
    lm.ys.push_back(row.lm_loss);
    dec.xs.push_back(x);
    dec.ys.push_back(row.decouple_loss);
    val.xs.push_back(x);
    val.ys.push_back(row.validation_loss);
  }
  svg_line_chart(at(out_dir, prefix + "_losses.svg"), prefix + " training",
                 "step", "loss", {lm, dec, val});
}

void report_comparison(const GenerationEval& sft, const GenerationEval& decouple,
                       const std::string& standard_id,
                       const std::string& out_dir) {
  if (sft.per_variety.size() != decouple.per_variety.size())
    throw ConfigError("report_comparison: variety sets differ");
  for (const auto& [variety, _] : sft.per_variety)
    if (!decouple.per_variety.count(variety))
      throw ConfigError("report_comparison: variety sets differ: " + variety);

  auto csv = open_csv(out_dir, "summary_deltas.csv",
                      "variety,sft_chrf,decouple_chrf,delta");
  std::vector<std::string> labels;
  std::vector<double> sft_vals, dec_vals;
  for (const auto& [variety, s] : sft.per_variety) {
    const double d = decouple.per_variety.at(variety);
    csv << variety << ',' << s << ',' << d << ',' << (d - s) << '\n';
    labels.push_back(variety);
    sft_vals.push_back(s);
    dec_vals.push_back(d);
  }
  csv << "__dialect_mean__," << sft.dialect_mean << ',' << decouple.dialect_mean
      << ',' << (decouple.dialect_mean - sft.dialect_mean) << '\n';
  (void)standard_id;
  svg_bar_chart(at(out_dir, "comparison.svg"),
                "Generation chrF++: baseline vs decoupling", labels,
                {"sft", "decouple"}, {sft_vals, dec_vals});
}

}  // namespace diamt
