#include "tabemb/table.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "tabemb/rng.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

using json = nlohmann::ordered_json;

void validate_table(const Table& table) {
  if (table.columns.empty())
    throw ValidationError("table '" + table.table_id + "' has no columns");
  size_t rows = table.columns.front().cells.size();
  if (rows == 0)
    throw ValidationError("table '" + table.table_id + "' has no rows");
  for (size_t c = 1; c < table.columns.size(); ++c) {
    if (table.columns[c].cells.size() != rows) {
      std::ostringstream msg;
      msg << "table '" << table.table_id << "': column " << c << " has "
          << table.columns[c].cells.size() << " rows, expected " << rows;
      throw ValidationError(msg.str());
    }
  }
}

std::optional<int> LabelSpace::ordinal_of(const std::string& label) const {
  auto it = index.find(label);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

const std::string& LabelSpace::label_of(int ordinal) const {
  if (ordinal < 0 || ordinal >= size())
    throw std::out_of_range("label ordinal out of range");
  return labels[static_cast<size_t>(ordinal)];
}

uint64_t LabelSpace::fingerprint() const {
  uint64_t h = fnv1a64(to_string(task));
  for (const auto& label : labels) {
    h = fnv1a64(label, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

LabelSpace make_label_space(Task task, std::vector<std::string> labels) {
  LabelSpace space;
  space.task = task;
  space.labels = std::move(labels);
  for (size_t i = 0; i < space.labels.size(); ++i) {
    auto [it, inserted] = space.index.emplace(space.labels[i], static_cast<int>(i));
    if (!inserted)
      throw ValidationError("duplicate label '" + space.labels[i] + "' in " +
                            to_string(task) + " label space");
  }
  return space;
}

const std::vector<AnnotatedTable>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "valid") return valid;
  if (name == "test") return test;
  throw ValidationError("unknown split '" + name + "' (expected train, valid or test)");
}

namespace {

std::optional<std::string> cell_from_json(const json& j, const std::string& context,
                                          int line_number) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) return j.get<std::string>();
  std::ostringstream msg;
  msg << context << ":" << line_number << ": cell must be a string or null";
  throw ParseError(msg.str());
}

json cell_to_json(const std::optional<std::string>& cell) {
  if (!cell.has_value()) return nullptr;
  return *cell;
}

}  // namespace

AnnotatedTable parse_table_record(const std::string& line, const std::string& context,
                                  int line_number) {
  auto where = [&](const std::string& what) {
    std::ostringstream msg;
    msg << context << ":" << line_number << ": " << what;
    return msg.str();
  };
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(where(std::string("invalid JSON (") + e.what() + ")"));
  }
  if (!rec.is_object()) throw ParseError(where("record must be a JSON object"));
  if (!rec.contains("table_id") || !rec["table_id"].is_string())
    throw ParseError(where("missing string field 'table_id'"));
  if (!rec.contains("columns") || !rec["columns"].is_array())
    throw ParseError(where("missing array field 'columns'"));

  AnnotatedTable at;
  at.table.table_id = rec["table_id"].get<std::string>();
  for (const auto& col_json : rec["columns"]) {
    if (!col_json.is_array()) throw ParseError(where("each column must be an array of cells"));
    Column col;
    col.cells.reserve(col_json.size());
    for (const auto& cell : col_json)
      col.cells.push_back(cell_from_json(cell, context, line_number));
    at.table.columns.push_back(std::move(col));
  }
  try {
    validate_table(at.table);
  } catch (const ValidationError& e) {
    throw ParseError(where(e.what()));
  }

  int n = at.table.num_columns();
  if (rec.contains("cta") && !rec["cta"].is_null()) {
    const auto& cta = rec["cta"];
    if (!cta.is_array() || static_cast<int>(cta.size()) != n)
      throw ParseError(where("'cta' must list one label (or null) per column"));
    std::vector<std::optional<std::string>> labels;
    for (const auto& l : cta) labels.push_back(cell_from_json(l, context, line_number));
    at.cta_labels = std::move(labels);
  }
  if (rec.contains("cpa") && !rec["cpa"].is_null()) {
    CpaLabels pairs;
    for (const auto& p : rec["cpa"]) {
      if (!p.is_array() || p.size() != 3 || !p[0].is_number_integer() ||
          !p[1].is_number_integer() || !p[2].is_string())
        throw ParseError(where("'cpa' entries must be [i, j, label]"));
      int i = p[0].get<int>(), j = p[1].get<int>();
      if (i < 0 || i >= n || j < 0 || j >= n || i == j)
        throw ParseError(where("cpa pair indices out of range or equal"));
      pairs.emplace_back(i, j, p[2].get<std::string>());
    }
    at.cpa_labels = std::move(pairs);
  }
  if (rec.contains("tta") && !rec["tta"].is_null()) {
    if (!rec["tta"].is_string()) throw ParseError(where("'tta' must be a string or null"));
    at.tta_label = rec["tta"].get<std::string>();
  }
  return at;
}

std::string table_record_to_json(const AnnotatedTable& at) {
  json rec;
  rec["table_id"] = at.table.table_id;
  json cols = json::array();
  for (const auto& col : at.table.columns) {
    json cells = json::array();
    for (const auto& cell : col.cells) cells.push_back(cell_to_json(cell));
    cols.push_back(std::move(cells));
  }
  rec["columns"] = std::move(cols);
  if (at.cta_labels.has_value()) {
    json cta = json::array();
    for (const auto& l : *at.cta_labels) cta.push_back(cell_to_json(l));
    rec["cta"] = std::move(cta);
  } else {
    rec["cta"] = nullptr;
  }
  if (at.cpa_labels.has_value()) {
    json cpa = json::array();
    for (const auto& [i, j, label] : *at.cpa_labels) cpa.push_back(json::array({i, j, label}));
    rec["cpa"] = std::move(cpa);
  } else {
    rec["cpa"] = nullptr;
  }
  rec["tta"] = at.tta_label.has_value() ? json(*at.tta_label) : json(nullptr);
  return rec.dump();
}

namespace {

std::vector<AnnotatedTable> load_split_file(const std::filesystem::path& path) {
  std::vector<AnnotatedTable> tables;
  if (!std::filesystem::exists(path)) return tables;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    tables.push_back(parse_table_record(line, path.string(), line_number));
  }
  return tables;
}

std::optional<LabelSpace> load_label_file(const std::filesystem::path& dir, Task task,
                                          bool required) {
  auto path = dir / ("labels_" + to_string(task) + ".txt");
  if (!std::filesystem::exists(path)) {
    if (required)
      throw ValidationError("missing label file: " + path.string());
    return std::nullopt;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  if (labels.empty()) throw ValidationError("label file is empty: " + path.string());
  return make_label_space(task, std::move(labels));
}

void check_label(const std::optional<LabelSpace>& space, Task task, const std::string& label,
                 const std::string& table_id) {
  if (!space.has_value())
    throw ValidationError("table '" + table_id + "' carries " + to_string(task) +
                          " labels but no labels_" + to_string(task) + ".txt was found");
  if (!space->ordinal_of(label).has_value())
    throw ValidationError("table '" + table_id + "': label '" + label + "' not in the " +
                          to_string(task) + " label space");
}

void validate_labels(const Dataset& ds, const std::vector<AnnotatedTable>& split) {
  for (const auto& at : split) {
    if (at.cta_labels.has_value()) {
      for (const auto& l : *at.cta_labels)
        if (l.has_value()) check_label(ds.space(Task::Cta), Task::Cta, *l, at.table.table_id);
    }
    if (at.cpa_labels.has_value()) {
      for (const auto& [i, j, label] : *at.cpa_labels)
        check_label(ds.space(Task::Cpa), Task::Cpa, label, at.table.table_id);
    }
    if (at.tta_label.has_value())
      check_label(ds.space(Task::Tta), Task::Tta, *at.tta_label, at.table.table_id);
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir, Task task) {
  if (!std::filesystem::is_directory(dir))
    throw ValidationError("dataset directory not found: " + dir.string());
  Dataset ds;
  for (Task t : {Task::Cta, Task::Cpa, Task::Tta})
    ds.label_spaces[static_cast<int>(t)] = load_label_file(dir, t, t == task);
  ds.train = load_split_file(dir / "train.jsonl");
  ds.valid = load_split_file(dir / "valid.jsonl");
  ds.test = load_split_file(dir / "test.jsonl");
  if (ds.train.empty())
    throw ValidationError("empty train split in " + dir.string());
  validate_labels(ds, ds.train);
  validate_labels(ds, ds.valid);
  validate_labels(ds, ds.test);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& space : dataset.label_spaces) {
    if (!space.has_value()) continue;
    std::string text;
    for (const auto& label : space->labels) {
      text += label;
      text += '\n';
    }
    write_text_file(dir / ("labels_" + to_string(space->task) + ".txt"), text);
  }
  auto write_split = [&](const char* name, const std::vector<AnnotatedTable>& split) {
    std::string text;
    for (const auto& at : split) {
      text += table_record_to_json(at);
      text += '\n';
    }
    write_text_file(dir / (std::string(name) + ".jsonl"), text);
  };
  write_split("train", dataset.train);
  write_split("valid", dataset.valid);
  write_split("test", dataset.test);
}

std::vector<AnnotatedTable> load_tables_jsonl(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ValidationError("input file not found: " + path.string());
  return load_split_file(path);
}

std::vector<std::string> sample_column_values(const Column& column, int m, uint64_t seed) {
  if (m < 1) throw ValidationError("sample size m must be >= 1");
  std::vector<const std::string*> non_null;
  for (const auto& cell : column.cells)
    if (!is_null_cell(cell)) non_null.push_back(&*cell);

  if (non_null.empty()) return {kEmptyColumnSentinel};

  std::vector<std::string> out;
  size_t want = std::min<size_t>(static_cast<size_t>(m), non_null.size());
  out.reserve(want);
  if (want == non_null.size()) {
    for (const auto* v : non_null) out.push_back(*v);
    return out;
  }
  // Selection sampling: walk in row order, keeping each remaining candidate
  // with probability (still needed / still available). Uniform without
  // replacement and order-preserving by construction.
  Rng rng(seed);
  size_t needed = want;
  size_t available = non_null.size();
  for (const auto* v : non_null) {
    if (needed == 0) break;
    if (rng.below(available) < needed) {
      out.push_back(*v);
      --needed;
    }
    --available;
  }
  return out;
}

}  // namespace tabemb
