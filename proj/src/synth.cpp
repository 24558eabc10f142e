#include "tabemb/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "tabemb/rng.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

namespace {

const std::vector<std::string> kFirstNames = {
    "Alice", "Marco",  "Yuki",   "Fatima", "Lars",  "Priya", "Diego", "Nina",
    "Oleg",  "Amara",  "Tomas",  "Ingrid", "Kofi",  "Elena", "Ravi",  "Sofia",
    "Hugo",  "Mei",    "Anders", "Leila",  "Pablo", "Hana",  "Viktor", "Asha"};
const std::vector<std::string> kLastNames = {
    "Johnson", "Rossi",   "Tanaka",   "Haddad",  "Nilsen",  "Sharma", "Moreno", "Petrov",
    "Okafor",  "Novak",   "Eriksson", "Mensah",  "Popescu", "Iyer",   "Costa",  "Larsen",
    "Weber",   "Lindgren", "Kamau",   "Dvorak",  "Silva",   "Nakamura", "Olsen", "Rahman"};
const std::vector<std::string> kCities = {
    "Springfield", "Rivermouth", "Lakeview",  "Stonebridge", "Fairholm",  "Eastmont",
    "Windale",     "Northgate",  "Ashford",   "Maplewood",   "Brookhaven", "Seacliff",
    "Redhill",     "Greenfield", "Oakhurst",  "Silverton",   "Westbrook", "Claymore",
    "Harborview",  "Duskvale",   "Thornbury", "Veldton",     "Mirefield", "Calder"};
const std::vector<std::string> kCountries = {
    "Norway",  "Japan",   "Brazil",  "Canada", "Kenya",   "Portugal", "India",  "Chile",
    "Finland", "Vietnam", "Morocco", "Poland", "Iceland", "Uruguay",  "Nepal",  "Ghana",
    "Austria", "Jordan",  "Latvia",  "Peru"};
const std::vector<std::string> kDomains = {"example.com", "mailbox.org", "postbox.net",
                                           "corp.io",     "webmail.dev"};
const std::vector<std::string> kUrlWords = {"atlas",  "orchid", "quartz", "harbor", "lumen",
                                            "cedar",  "vertex", "willow", "cobalt", "meadow"};
const std::vector<std::string> kUrlTlds = {"com", "org", "net", "io"};
const std::vector<std::string> kMonths = {"January", "February", "March",     "April",
                                          "May",     "June",     "July",      "August",
                                          "September", "October", "November", "December"};
const std::vector<std::string> kCurrencies = {"USD", "EUR", "GBP", "JPY", "CAD",
                                              "AUD", "CHF", "SEK", "NOK", "NZD"};
const std::vector<std::string> kStreetNames = {"Oak",    "Maple", "Cedar",  "Birch", "Elm",
                                               "Willow", "Aspen", "Linden", "Alder", "Rowan"};
const std::vector<std::string> kStreetSuffixes = {"Street", "Avenue", "Road", "Lane", "Drive"};

// Regular format-distinct types; the first three double as companions for
// the ambiguous classes.
const std::vector<std::string> kRegularTypes = {"person_name", "city",  "country",
                                                "email",       "phone", "url",
                                                "identifier",  "date_iso"};
const std::vector<std::string> kCompanionTypes = {"month_name", "currency_code", "street_name"};
const std::vector<std::string> kAmbiguousTypes = {"year", "price", "postal_code"};

struct Topic {
  std::string name;
  std::string key_type;
  std::vector<std::string> pool;
};

const std::vector<Topic>& topics() {
  static const std::vector<Topic> kTopics = {
      {"contacts", "person_name", {"email", "phone", "city", "date_iso"}},
      {"catalog", "identifier", {"url", "country", "email", "date_iso"}},
      {"places", "city", {"country", "url", "phone", "person_name"}},
      {"events", "date_iso", {"person_name", "city", "url", "identifier"}},
  };
  return kTopics;
}

std::string generate_value(const std::string& type, Rng& rng) {
  char buf[40];
  if (type == "person_name") return rng.pick(kFirstNames) + " " + rng.pick(kLastNames);
  if (type == "city") return rng.pick(kCities);
  if (type == "country") return rng.pick(kCountries);
  if (type == "email") {
    std::string user = rng.pick(kFirstNames) + "." + rng.pick(kLastNames);
    std::transform(user.begin(), user.end(), user.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return user + "@" + rng.pick(kDomains);
  }
  if (type == "phone") {
    std::snprintf(buf, sizeof(buf), "+1-%03d-%03d-%04d", rng.uniform_int(200, 999),
                  rng.uniform_int(200, 999), rng.uniform_int(0, 9999));
    return buf;
  }
  if (type == "url")
    return "https://www." + rng.pick(kUrlWords) + rng.pick(kUrlWords) + "." + rng.pick(kUrlTlds);
  if (type == "identifier") {
    std::snprintf(buf, sizeof(buf), "%c%c-%05d", 'A' + rng.uniform_int(0, 25),
                  'A' + rng.uniform_int(0, 25), rng.uniform_int(0, 99999));
    return buf;
  }
  if (type == "date_iso") {
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", rng.uniform_int(1980, 2024),
                  rng.uniform_int(1, 12), rng.uniform_int(1, 28));
    return buf;
  }
  if (type == "month_name") return rng.pick(kMonths);
  if (type == "currency_code") return rng.pick(kCurrencies);
  if (type == "street_name") {
    std::snprintf(buf, sizeof(buf), "%d ", rng.uniform_int(1, 220));
    return std::string(buf) + rng.pick(kStreetNames) + " " + rng.pick(kStreetSuffixes);
  }
  // Ambiguous classes share one value generator: a plain 4-digit number.
  // The label is decided by the companion column, never by the values.
  if (type == "year" || type == "price" || type == "postal_code")
    return std::to_string(rng.uniform_int(1000, 9999));
  throw std::logic_error("unknown synthetic type " + type);
}

std::string companion_for(const std::string& ambiguous_type) {
  for (size_t i = 0; i < kAmbiguousTypes.size(); ++i)
    if (kAmbiguousTypes[i] == ambiguous_type) return kCompanionTypes[i];
  throw std::logic_error("not an ambiguous type: " + ambiguous_type);
}

AnnotatedTable generate_table(const SynthConfig& config, const std::string& split_name,
                              int index, const std::vector<std::string>& pool_types_allowed) {
  Rng rng = Rng::keyed(config.seed, "table",
                       hash_mix(fnv1a64(split_name), static_cast<uint64_t>(index)));
  const Topic& topic = rng.pick(topics());
  int n = rng.uniform_int(config.min_columns, config.max_columns);
  int rows = rng.uniform_int(config.min_rows, config.max_rows);

  std::vector<std::string> col_types(static_cast<size_t>(n));
  col_types[0] = topic.key_type;
  std::vector<int> ambiguous_cols;
  for (int c = 1; c < n; ++c)
    if (rng.uniform() < config.ambiguity_rate) ambiguous_cols.push_back(c);

  std::string amb_gold;
  if (!ambiguous_cols.empty()) {
    amb_gold = rng.pick(kAmbiguousTypes);
    // One companion type per table so the (format, companion) -> gold rule
    // stays single-valued; demote one ambiguous column if nothing is free.
    std::vector<int> free_cols;
    for (int c = 1; c < n; ++c)
      if (std::find(ambiguous_cols.begin(), ambiguous_cols.end(), c) == ambiguous_cols.end())
        free_cols.push_back(c);
    int companion_col;
    if (free_cols.empty()) {
      companion_col = ambiguous_cols.back();
      ambiguous_cols.pop_back();
    } else {
      companion_col = free_cols[static_cast<size_t>(rng.below(free_cols.size()))];
    }
    col_types[static_cast<size_t>(companion_col)] = companion_for(amb_gold);
    for (int c : ambiguous_cols) col_types[static_cast<size_t>(c)] = amb_gold;
  }
  std::vector<std::string> pool;
  for (const auto& t : topic.pool)
    if (std::find(pool_types_allowed.begin(), pool_types_allowed.end(), t) !=
        pool_types_allowed.end())
      pool.push_back(t);
  if (pool.empty()) pool.push_back(topic.key_type);
  for (int c = 1; c < n; ++c)
    if (col_types[static_cast<size_t>(c)].empty())
      col_types[static_cast<size_t>(c)] = rng.pick(pool);

  AnnotatedTable at;
  at.table.table_id = split_name + "-" + std::to_string(index);
  constexpr double kNullRate = 0.03;
  for (int c = 0; c < n; ++c) {
    Column col;
    col.cells.reserve(static_cast<size_t>(rows));
    for (int r = 0; r < rows; ++r) {
      if (rng.uniform() < kNullRate)
        col.cells.push_back(std::nullopt);
      else
        col.cells.push_back(generate_value(col_types[static_cast<size_t>(c)], rng));
    }
    at.table.columns.push_back(std::move(col));
  }
  std::vector<std::optional<std::string>> cta;
  for (const auto& t : col_types) cta.emplace_back(t);
  at.cta_labels = std::move(cta);
  CpaLabels cpa;
  for (int c = 1; c < n; ++c)
    cpa.emplace_back(0, c, "has_" + col_types[static_cast<size_t>(c)]);
  at.cpa_labels = std::move(cpa);
  at.tta_label = topic.name;
  return at;
}

}  // namespace

void SynthConfig::validate() const {
  if (train_tables < 1) throw ValidationError("synth: need at least one training table");
  if (valid_tables < 0 || test_tables < 0) throw ValidationError("synth: negative split size");
  if (min_columns < 2 || max_columns < min_columns)
    throw ValidationError("synth: column range invalid (need at least 2 columns)");
  if (min_rows < 1 || max_rows < min_rows) throw ValidationError("synth: row range invalid");
  if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0)
    throw ValidationError("synth: ambiguity rate must be in [0, 1]");
  if (num_base_types != 0 && (num_base_types < 4 || num_base_types > 8))
    throw ValidationError("synth: num_base_types must be 0 (all) or 4..8");
}

const std::vector<std::pair<std::string, std::string>>& ambiguous_class_companions() {
  static const std::vector<std::pair<std::string, std::string>> kMap = {
      {"year", "month_name"}, {"price", "currency_code"}, {"postal_code", "street_name"}};
  return kMap;
}

Dataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  int base = config.num_base_types == 0 ? static_cast<int>(kRegularTypes.size())
                                        : config.num_base_types;
  std::vector<std::string> allowed(kRegularTypes.begin(), kRegularTypes.begin() + base);

  Dataset ds;
  std::vector<std::string> cta_labels = kRegularTypes;
  cta_labels.insert(cta_labels.end(), kCompanionTypes.begin(), kCompanionTypes.end());
  cta_labels.insert(cta_labels.end(), kAmbiguousTypes.begin(), kAmbiguousTypes.end());
  std::vector<std::string> cpa_labels;
  for (const auto& t : cta_labels) cpa_labels.push_back("has_" + t);
  std::vector<std::string> tta_labels;
  for (const auto& t : topics()) tta_labels.push_back(t.name);

  ds.label_spaces[static_cast<int>(Task::Cta)] = make_label_space(Task::Cta, cta_labels);
  ds.label_spaces[static_cast<int>(Task::Cpa)] = make_label_space(Task::Cpa, cpa_labels);
  ds.label_spaces[static_cast<int>(Task::Tta)] = make_label_space(Task::Tta, tta_labels);

  for (int i = 0; i < config.train_tables; ++i)
    ds.train.push_back(generate_table(config, "train", i, allowed));
  for (int i = 0; i < config.valid_tables; ++i)
    ds.valid.push_back(generate_table(config, "valid", i, allowed));
  for (int i = 0; i < config.test_tables; ++i)
    ds.test.push_back(generate_table(config, "test", i, allowed));
  return ds;
}

}  // namespace tabemb
