#include <algorithm>
#include <cstdio>
#include <sstream>

#include "egovideo/pipeline/pipeline.hpp"

namespace egovideo::pipeline {

namespace {

std::vector<ReportColumn> recall_columns() {
  return {{"R1@0.3", "R1@0.3"}, {"R1@0.5", "R1@0.5"}, {"R5@0.3", "R5@0.3"}, {"R5@0.5", "R5@0.5"}};
}

std::vector<ReportColumn> accuracy_columns() {
  return {{"Verb top-1", "verb_top1"}, {"Noun top-1", "noun_top1"}, {"Action top-1", "action_top1"}};
}

std::string cell(const io::Json& metrics, const std::string& key) {
  const auto it = metrics.find(key);
  if (it == metrics.end() || !it->is_number()) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", it->get<double>());
  return buf;
}

struct Row {
  std::string name;
  Stage stage;
  io::Json metrics;
};

}  // namespace

const std::vector<ReportTable>& report_tables() {
  static const std::vector<ReportTable> tables = [] {
    std::vector<ReportTable> t;
    t.push_back({"Video-text post-pretraining",
                 Stage::kPretrain,
                 {{"First loss", "first_epoch_loss"}, {"Final loss", "final_epoch_loss"},
                  {"Held-out T2V R@1", "zero_shot_t2v_r1"}},
                 {{"", ""}}});
    t.push_back({"Natural language queries", Stage::kNlq, recall_columns(), {{"", ""}}});
    t.push_back({"Step grounding", Stage::kGoalstep, recall_columns(), {{"", ""}}});
    t.push_back({"Moment queries",
                 Stage::kMq,
                 {{"mAP@0.1", "mAP@0.1"},
                  {"mAP@0.2", "mAP@0.2"},
                  {"mAP@0.3", "mAP@0.3"},
                  {"mAP@0.4", "mAP@0.4"},
                  {"mAP@0.5", "mAP@0.5"},
                  {"Avg mAP", "avg_mAP"},
                  {"R1@0.5", "R1@0.5"}},
                 {{"", ""}}});
    auto lta = accuracy_columns();
    lta.push_back({"Verb ED", "verb_ED"});
    lta.push_back({"Noun ED", "noun_ED"});
    lta.push_back({"Action ED", "action_ED"});
    t.push_back({"Long-term anticipation", Stage::kLta, lta, {{"", ""}}});
    auto ar = accuracy_columns();
    ar.push_back({"Verb top-5", "verb_top5"});
    ar.push_back({"Noun top-5", "noun_top5"});
    t.push_back({"Action recognition", Stage::kEkAr, ar, {{"", ""}}});
    t.push_back({"Multi-instance retrieval",
                 Stage::kEkMir,
                 {{"mAP V2T", "mAP_v2t"},
                  {"mAP T2V", "mAP_t2v"},
                  {"mAP avg", "mAP_avg"},
                  {"nDCG V2T", "nDCG_v2t"},
                  {"nDCG T2V", "nDCG_t2v"},
                  {"nDCG avg", "nDCG_avg"}},
                 {{" (zero-shot)", "zs_"}, {" (fine-tuned)", "ft_"}}});
    t.push_back({"Domain adaptation", Stage::kEkUda, accuracy_columns(), {{"", ""}}});
    t.push_back({"Grounding ensemble", Stage::kEnsemble, recall_columns(), {{"", ""}}});
    return t;
  }();
  return tables;
}

std::string render_report(const fs::path& results, std::vector<std::string>* warnings) {
  std::vector<fs::path> manifests;
  if (fs::is_directory(results)) {
    for (const auto& e : fs::recursive_directory_iterator(results)) {
      if (e.is_regular_file() && e.path().filename() == "run.json") manifests.push_back(e.path());
    }
  }
  std::sort(manifests.begin(), manifests.end());

  std::vector<Row> rows;
  for (const auto& path : manifests) {
    std::string rel = fs::relative(path.parent_path(), results).generic_string();
    try {
      const auto j = io::read_json_with_comments(path);
      rows.push_back({rel, stage_from_string(j.at("stage").get<std::string>()), j.at("metrics")});
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back("skipped " + rel + "/run.json: " + e.what());
    }
  }

  std::ostringstream out;
  out << "# Results\n";
  for (const auto& table : report_tables()) {
    out << "\n## " << table.title << "\n\n| Run |";
    for (const auto& c : table.columns) out << ' ' << c.header << " |";
    out << "\n|---|";
    for (size_t i = 0; i < table.columns.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& row : rows) {
      if (row.stage != table.stage) continue;
      bool emitted = false;
      for (size_t v = 0; v < table.variants.size(); ++v) {
        const auto& variant = table.variants[v];
        std::vector<std::string> cells;
        bool any = false;
        for (const auto& c : table.columns) {
          cells.push_back(cell(row.metrics, variant.prefix + c.key));
          any = any || cells.back() != "-";
        }
        const bool last = v + 1 == table.variants.size();
        if (!any && (emitted || !last)) continue;
        out << "| " << row.name << variant.label << " |";
        for (const auto& s : cells) out << ' ' << s << " |";
        out << '\n';
        emitted = true;
      }
    }
  }
  return out.str();
}

}  // namespace egovideo::pipeline
