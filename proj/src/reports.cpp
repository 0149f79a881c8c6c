#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gotham/trainer.hpp"

namespace gotham {

namespace {

std::string fixed(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

std::string report_to_json(const SessionReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["session"] = r.session;
  j["num_classes"] = r.num_classes();
  j["classes"] = r.classes;
  j["accuracy"] = r.accuracy;
  j["seen_accuracy"] = r.seen_accuracy ? ordered_json(*r.seen_accuracy) : ordered_json(nullptr);
  j["unseen_accuracy"] = r.unseen_accuracy ? ordered_json(*r.unseen_accuracy) : ordered_json(nullptr);
  j["correct"] = r.correct;
  j["total"] = r.total;
  ordered_json per = ordered_json::object();
  for (const auto& [c, acc] : r.per_class) {
    per[std::to_string(c)] = {{"correct", acc.correct},
                              {"total", acc.total},
                              {"accuracy", acc.total ? ordered_json(static_cast<double>(acc.correct) / acc.total)
                                                     : ordered_json(nullptr)}};
  }
  j["per_class"] = per;
  j["episodes"] = r.episodes;
  ordered_json losses = ordered_json::array();
  for (const auto& l : r.losses)
    losses.push_back({{"step", l.step},
                      {"l_cls", l.parts.cls},
                      {"l_seg", l.parts.seg},
                      {"l_sem", l.parts.sem},
                      {"l_emb", l.parts.emb},
                      {"l_align", l.parts.align},
                      {"total", l.total}});
  j["losses"] = losses;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump(2) + "\n";
}

std::string summary_tsv(const std::vector<SessionReport>& reports, const std::vector<ClassId>& base_classes) {
  std::ostringstream out;
  out << "metric";
  for (const auto& r : reports) out << "\tsession_" << r.session;
  out << "\nclasses";
  for (const auto& r : reports) out << '\t' << r.num_classes();
  out << "\naccuracy";
  for (const auto& r : reports) out << '\t' << fixed(r.accuracy);
  out << "\nbase_accuracy";
  for (const auto& r : reports) out << '\t' << fixed(r.accuracy_over(base_classes));
  out << "\nseen_accuracy";
  for (const auto& r : reports) out << '\t' << fixed(r.seen_accuracy);
  out << "\nunseen_accuracy";
  for (const auto& r : reports) out << '\t' << fixed(r.unseen_accuracy);
  out << '\n';
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

}  // namespace gotham
