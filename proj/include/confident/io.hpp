#pragma once

// Prediction dumps, run-score tables and prior files.
//
// Predictions CSV:   id,label,logit_<class>,...   (or prob_<class> columns;
//                    id and label columns optional)
// Predictions JSONL: {"kind": "logits"|"probabilities", "classes": [...]}
//                    {"id": ..., "label": ..., "scores": [...]}  per line
// Run table CSV:     header of model names, one paired run per row
// Priors CSV:        class,prior

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "confident/core.hpp"
#include "confident/error.hpp"

namespace confident {

enum class PredictionFormat { CSV, JSONL };

/// JSONL for *.jsonl / *.ndjson, CSV otherwise.
inline PredictionFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".ndjson") ? PredictionFormat::JSONL : PredictionFormat::CSV;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV record. Supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back(trim(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quoted field");
  fields.emplace_back(trim(field));
  return fields;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

inline std::optional<std::size_t> parse_index(std::string_view s) {
  s = trim(s);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'");
  return in;
}

inline std::size_t resolve_label(std::string_view text, const ClassCatalog& catalog,
                                 const std::string& source, std::size_t line) {
  if (auto idx = parse_index(text)) {
    if (*idx >= catalog.size()) {
      throw IngestionError(source, line,
                           "label " + std::to_string(*idx) + " out of range [0, " +
                               std::to_string(catalog.size()) + ")");
    }
    return *idx;
  }
  if (auto idx = catalog.find(std::string(trim(text)))) return *idx;
  throw IngestionError(source, line, "unrecognised label '" + std::string(text) + "'");
}

inline void check_scores(std::span<const double> row, ScoreKind kind, const std::string& source,
                         std::size_t line) {
  if (auto problem = PredictionSet::check_row(row, kind)) {
    throw IngestionError(source, line, *problem);
  }
}

inline PredictionSet read_predictions_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv(line);
      break;
    }
  }
  if (header.empty()) throw IngestionError(source, line_no, "missing header");

  std::optional<std::size_t> id_col;
  std::optional<std::size_t> label_col;
  std::vector<std::size_t> score_cols;
  std::vector<std::string> class_names;
  std::optional<ScoreKind> kind;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string& h = header[i];
    std::optional<ScoreKind> col_kind;
    std::string name;
    if (h == "id") {
      id_col = i;
      continue;
    }
    if (h == "label") {
      label_col = i;
      continue;
    }
    if (h.rfind("logit_", 0) == 0) {
      col_kind = ScoreKind::Logits;
      name = h.substr(6);
    } else if (h.rfind("prob_", 0) == 0) {
      col_kind = ScoreKind::Probabilities;
      name = h.substr(5);
    } else {
      throw IngestionError(source, line_no, "unexpected column '" + h + "'");
    }
    if (kind && *kind != *col_kind) {
      throw IngestionError(source, line_no, "header mixes logit_ and prob_ columns");
    }
    kind = col_kind;
    score_cols.push_back(i);
    class_names.push_back(name);
  }
  if (!kind) throw IngestionError(source, line_no, "header has no logit_ or prob_ columns");

  ClassCatalog catalog;
  try {
    catalog = ClassCatalog(class_names);
  } catch (const DomainError& e) {
    throw IngestionError(source, line_no, e.what());
  }

  std::vector<double> scores;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;
  std::vector<double> row(score_cols.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = split_csv(line);
    } catch (const std::invalid_argument& e) {
      throw IngestionError(source, line_no, e.what());
    }
    if (fields.size() != header.size()) {
      throw IngestionError(source, line_no,
                           "expected " + std::to_string(header.size()) + " columns, found " +
                               std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < score_cols.size(); ++j) {
      auto v = parse_double(fields[score_cols[j]]);
      if (!v) {
        throw IngestionError(source, line_no, "malformed score '" + fields[score_cols[j]] + "'");
      }
      row[j] = *v;
    }
    check_scores(row, *kind, source, line_no);
    scores.insert(scores.end(), row.begin(), row.end());
    if (label_col) labels.push_back(resolve_label(fields[*label_col], catalog, source, line_no));
    if (id_col) ids.push_back(fields[*id_col]);
  }

  std::optional<std::vector<std::size_t>> opt_labels;
  std::optional<std::vector<std::string>> opt_ids;
  if (label_col) opt_labels = std::move(labels);
  if (id_col) opt_ids = std::move(ids);
  return PredictionSet(std::move(catalog), *kind, std::move(scores), std::move(opt_labels),
                       std::move(opt_ids));
}

inline PredictionSet read_predictions_jsonl(std::istream& in, const std::string& source) {
  using nlohmann::json;
  std::string line;
  std::size_t line_no = 0;
  std::optional<json> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      header = json::parse(line);
    } catch (const json::exception& e) {
      throw IngestionError(source, line_no, std::string("malformed header: ") + e.what());
    }
    break;
  }
  if (!header || !header->is_object() || !header->contains("kind")) {
    throw IngestionError(source, line_no, "first line must be a header object with a 'kind' field");
  }
  ScoreKind kind;
  const auto kind_text = (*header)["kind"].is_string() ? (*header)["kind"].get<std::string>() : "";
  if (kind_text == "logits") kind = ScoreKind::Logits;
  else if (kind_text == "probabilities") kind = ScoreKind::Probabilities;
  else throw IngestionError(source, line_no, "kind must be 'logits' or 'probabilities'");

  std::optional<ClassCatalog> catalog;
  if (header->contains("classes")) {
    try {
      catalog = ClassCatalog((*header)["classes"].get<std::vector<std::string>>());
    } catch (const std::exception& e) {
      throw IngestionError(source, line_no, std::string("bad classes: ") + e.what());
    }
  }

  std::vector<double> scores;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;
  std::optional<bool> labelled;
  bool any_ids = false;
  std::size_t rows = 0;
  std::vector<std::pair<std::size_t, json>> pending_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw IngestionError(source, line_no, std::string("malformed row: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("scores") || !obj["scores"].is_array()) {
      throw IngestionError(source, line_no, "row must be an object with a 'scores' array");
    }
    std::vector<double> row;
    for (const auto& v : obj["scores"]) {
      if (!v.is_number()) throw IngestionError(source, line_no, "non-numeric score");
      row.push_back(v.get<double>());
    }
    if (!catalog) {
      try {
        catalog = ClassCatalog::indexed(row.size());
      } catch (const DomainError& e) {
        throw IngestionError(source, line_no, e.what());
      }
    }
    if (row.size() != catalog->size()) {
      throw IngestionError(source, line_no,
                           "expected " + std::to_string(catalog->size()) + " scores, found " +
                               std::to_string(row.size()));
    }
    check_scores(row, kind, source, line_no);
    scores.insert(scores.end(), row.begin(), row.end());

    const bool has_label = obj.contains("label") && !obj["label"].is_null();
    if (labelled && *labelled != has_label) {
      throw IngestionError(source, line_no, "label present on some rows but not others");
    }
    labelled = has_label;
    if (has_label) {
      const auto& l = obj["label"];
      std::string text = l.is_string() ? l.get<std::string>() : l.dump();
      labels.push_back(resolve_label(text, *catalog, source, line_no));
    }
    if (obj.contains("id")) {
      any_ids = true;
      const auto& id = obj["id"];
      ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
    } else {
      ids.push_back(std::to_string(rows));
    }
    ++rows;
  }
  if (!catalog) {
    throw IngestionError(source, line_no, "no rows and no 'classes' in header; class count unknown");
  }
  std::optional<std::vector<std::size_t>> opt_labels;
  std::optional<std::vector<std::string>> opt_ids;
  if (labelled.value_or(false)) opt_labels = std::move(labels);
  if (any_ids) opt_ids = std::move(ids);
  return PredictionSet(std::move(*catalog), kind, std::move(scores), std::move(opt_labels),
                       std::move(opt_ids));
}

}  // namespace detail

inline PredictionSet read_predictions(std::istream& in, PredictionFormat format,
                                      const std::string& source = "<stream>") {
  return format == PredictionFormat::CSV ? detail::read_predictions_csv(in, source)
                                         : detail::read_predictions_jsonl(in, source);
}

/// Reads and validates a prediction dump; row order is preserved.
inline PredictionSet load_predictions(const std::filesystem::path& path, PredictionFormat format) {
  auto in = detail::open_input(path);
  return read_predictions(in, format, path.string());
}

inline PredictionSet load_predictions(const std::filesystem::path& path) {
  return load_predictions(path, format_from_path(path));
}

inline void write_predictions(std::ostream& out, const PredictionSet& preds,
                              PredictionFormat format) {
  const auto& names = preds.catalog().names();
  if (format == PredictionFormat::CSV) {
    const char* prefix = preds.kind() == ScoreKind::Logits ? "logit_" : "prob_";
    std::string header;
    if (preds.has_ids()) header += "id,";
    if (preds.has_labels()) header += "label,";
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j) header += ',';
      header += detail::csv_escape(prefix + names[j]);
    }
    out << header << '\n';
    for (std::size_t r = 0; r < preds.size(); ++r) {
      std::string line;
      if (preds.has_ids()) line += detail::csv_escape(preds.id(r)) + ',';
      if (preds.has_labels()) line += std::to_string(preds.label(r)) + ',';
      auto row = preds.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j) line += ',';
        line += detail::format_double(row[j]);
      }
      out << line << '\n';
    }
    return;
  }

  nlohmann::json header = {{"kind", to_string(preds.kind())}, {"classes", names}};
  out << header.dump() << '\n';
  for (std::size_t r = 0; r < preds.size(); ++r) {
    nlohmann::ordered_json obj;
    if (preds.has_ids()) obj["id"] = preds.id(r);
    if (preds.has_labels()) obj["label"] = preds.label(r);
    auto row = preds.row(r);
    obj["scores"] = std::vector<double>(row.begin(), row.end());
    out << obj.dump() << '\n';
  }
}

inline void save_predictions(const std::filesystem::path& path, const PredictionSet& preds,
                             PredictionFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write '" + path.string() + "'");
  write_predictions(out, preds, format);
}

inline RunScoreTable read_run_table(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv(line);
      break;
    }
  }
  if (header.empty()) throw IngestionError(source, line_no, "missing header of model names");
  std::vector<std::vector<double>> runs;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    if (fields.size() != header.size()) {
      throw IngestionError(source, line_no,
                           "expected " + std::to_string(header.size()) + " columns, found " +
                               std::to_string(fields.size()));
    }
    std::vector<double> run;
    for (const auto& f : fields) {
      auto v = detail::parse_double(f);
      if (!v || !std::isfinite(*v)) throw IngestionError(source, line_no, "bad metric value '" + f + "'");
      run.push_back(*v);
    }
    runs.push_back(std::move(run));
  }
  try {
    return RunScoreTable(std::move(header), std::move(runs));
  } catch (const DomainError& e) {
    throw IngestionError(source, 1, e.what());
  }
}

inline RunScoreTable load_run_table(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_run_table(in, path.string());
}

/// Reads `class,prior` rows and returns priors in catalog order. Classes are
/// matched by name, or by column index when the name is not in the catalog.
inline std::vector<double> read_priors(std::istream& in, const ClassCatalog& catalog,
                                       const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::vector<std::optional<double>> values(catalog.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    if (!saw_header) {
      saw_header = true;
      if (fields.size() != 2 || fields[0] != "class" || fields[1] != "prior") {
        throw IngestionError(source, line_no, "header must be 'class,prior'");
      }
      continue;
    }
    if (fields.size() != 2) throw IngestionError(source, line_no, "expected 2 columns");
    std::optional<std::size_t> idx = catalog.find(fields[0]);
    if (!idx) {
      idx = detail::parse_index(fields[0]);
      if (idx && *idx >= catalog.size()) idx.reset();
    }
    if (!idx) throw IngestionError(source, line_no, "unknown class '" + fields[0] + "'");
    if (values[*idx]) throw IngestionError(source, line_no, "class '" + fields[0] + "' listed twice");
    auto v = detail::parse_double(fields[1]);
    if (!v || !std::isfinite(*v)) throw IngestionError(source, line_no, "bad prior '" + fields[1] + "'");
    values[*idx] = *v;
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i]) throw IngestionError(source, line_no, "no prior for class '" + catalog.name(i) + "'");
    out.push_back(*values[i]);
  }
  return out;
}

inline std::vector<double> load_priors(const std::filesystem::path& path, const ClassCatalog& catalog) {
  auto in = detail::open_input(path);
  return read_priors(in, catalog, path.string());
}

}  // namespace confident
