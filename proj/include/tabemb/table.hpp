#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabemb/types.hpp"

namespace tabemb {

// One table column: an ordered list of cells. A cell is null if it is a
// JSON null or an empty string; both occur interchangeably in web tables.
struct Column {
  std::vector<std::optional<std::string>> cells;
};

inline bool is_null_cell(const std::optional<std::string>& cell) {
  return !cell.has_value() || cell->empty();
}

// Headerless table: ordered columns of string cells, all the same length.
struct Table {
  std::string table_id;
  std::vector<Column> columns;

  int num_columns() const { return static_cast<int>(columns.size()); }
  int num_rows() const {
    return columns.empty() ? 0 : static_cast<int>(columns.front().cells.size());
  }
};

// Validates the Table invariants (n >= 1, equal row counts >= 1).
void validate_table(const Table& table);

struct LabelSpace {
  Task task;
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(labels.size()); }
  std::optional<int> ordinal_of(const std::string& label) const;
  const std::string& label_of(int ordinal) const;
  uint64_t fingerprint() const;
};

LabelSpace make_label_space(Task task, std::vector<std::string> labels);

// (subject column, object column) -> relation label. Pairs are ordered.
using CpaLabels = std::vector<std::tuple<int, int, std::string>>;

struct AnnotatedTable {
  Table table;
  // Per-column CTA labels; entries may be null for partially labeled tables.
  std::optional<std::vector<std::optional<std::string>>> cta_labels;
  std::optional<CpaLabels> cpa_labels;
  std::optional<std::string> tta_label;
};

struct Dataset {
  std::vector<AnnotatedTable> train;
  std::vector<AnnotatedTable> valid;
  std::vector<AnnotatedTable> test;
  std::array<std::optional<LabelSpace>, kNumTasks> label_spaces;

  const std::optional<LabelSpace>& space(Task task) const {
    return label_spaces[static_cast<int>(task)];
  }
  const std::vector<AnnotatedTable>& split(const std::string& name) const;
};

// Loads the on-disk dataset layout:
//   <dir>/labels_{cta,cpa,tta}.txt   one label per line, order = ordinal
//   <dir>/{train,valid,test}.jsonl   one table per line
// The label file for `task` is required; the others are loaded when
// present. Any label appearing in the data must exist in its space.
Dataset load_dataset(const std::filesystem::path& dir, Task task);

// Writes the same layout back. load(save(ds)) preserves logical content.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// JSONL record <-> AnnotatedTable, exposed for prediction I/O.
AnnotatedTable parse_table_record(const std::string& line, const std::string& context,
                                  int line_number);
std::string table_record_to_json(const AnnotatedTable& at);

// Reads a bare list of tables (labels optional) from a .jsonl file.
std::vector<AnnotatedTable> load_tables_jsonl(const std::filesystem::path& path);

// Uniformly samples up to m non-null cell values without replacement,
// preserving row order. Fewer than m non-null cells: returns them all.
// All cells null: returns the single sentinel "[EMPTY]".
std::vector<std::string> sample_column_values(const Column& column, int m, uint64_t seed);

inline constexpr const char* kEmptyColumnSentinel = "[EMPTY]";

}  // namespace tabemb
