#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabemb/table.hpp"

namespace tabemb {

// Synthetic benchmark generator. Columns are drawn from format-distinct
// value generators (names, cities, phones, ...). A fraction of columns is
// "ambiguous": plain 4-digit numbers whose gold type (year, price or
// postal_code) cannot be inferred from the values alone — the same value
// distribution is used for all three — and is instead determined by a
// companion column type present in the same table (month_name -> year,
// currency_code -> price, street_name -> postal_code). At most one
// companion type appears per table, so the gold label of every ambiguous
// column is a deterministic function of (value format, companion type).
// CPA labels relate column 0 (the table's key column) to every other
// column; the TTA label is the table's topic, which fixes the palette the
// remaining columns are drawn from.
struct SynthConfig {
  int train_tables = 300;
  int valid_tables = 60;
  int test_tables = 100;
  int min_columns = 4;
  int max_columns = 7;
  int min_rows = 8;
  int max_rows = 16;
  int num_base_types = 0;  // 0 = full palette; otherwise first N regular types
  double ambiguity_rate = 0.5;
  uint64_t seed = 0;

  void validate() const;
};

Dataset generate_synthetic(const SynthConfig& config);

// Gold labels of the ambiguous classes and their companion types, exposed
// so independent checkers can re-derive labels from table content.
const std::vector<std::pair<std::string, std::string>>& ambiguous_class_companions();

}  // namespace tabemb
