// Copyright (c) 2026, the escm authors
// SPDX-License-Identifier: Apache-2.0

#include "escm/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "escm/error.hpp"
#include "escm/rng.hpp"

namespace escm::ingest {

namespace {

constexpr std::size_t kMaxRowErrors = 32;

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delim)) fields.push_back(field);
  if (!line.empty() && line.back() == delim) fields.emplace_back();
  return fields;
}

bool parse_int64(const std::string& s, std::int64_t& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto result = std::from_chars(begin, end, out);
  return result.ec == std::errc{} && result.ptr == end;
}

bool parse_binary(const std::string& s, std::uint8_t& out) {
  if (s == "0") {
    out = 0;
    return true;
  }
  if (s == "1") {
    out = 1;
    return true;
  }
  return false;
}

void note_error(LoadReport& report, std::size_t line_no, const std::string& what) {
  report.rows_malformed += 1;
  if (report.row_errors.size() < kMaxRowErrors) {
    report.row_errors.push_back("line " + std::to_string(line_no) + ": " + what);
  }
}

LoadResult load_flat(const std::string& path, const IngestSchema& schema,
                     const Vocabulary* frozen_vocab) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw DataError(path + ": missing header");
  }
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
  const std::vector<std::string> header = split_line(header_line, schema.delimiter);

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(path + ": header is missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feature_cols;
  feature_cols.reserve(schema.feature_columns.size());
  for (const std::string& name : schema.feature_columns) {
    feature_cols.push_back(column_of(name));
  }
  const std::size_t click_col = column_of(schema.click_column);
  const std::size_t conv_col = column_of(schema.conversion_column);

  LoadResult result;
  result.dataset.provenance = data::Provenance::ingested;
  if (frozen_vocab != nullptr) {
    result.vocab = *frozen_vocab;
  } else {
    result.vocab.per_column.resize(schema.feature_columns.size());
  }

  std::string line;
  std::size_t line_no = 1;
  std::size_t total_data_rows = 0;
  std::uint64_t next_pair_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++total_data_rows;
    const std::vector<std::string> fields = split_line(line, schema.delimiter);
    if (fields.size() != header.size()) {
      note_error(result.report, line_no, "expected " +
                 std::to_string(header.size()) + " fields, got " +
                 std::to_string(fields.size()));
      continue;
    }
    std::uint8_t click = 0, conversion = 0;
    if (!parse_binary(fields[click_col], click) ||
        !parse_binary(fields[conv_col], conversion)) {
      note_error(result.report, line_no, "click/conversion must be 0 or 1");
      continue;
    }
    data::Row row;
    row.feature_ids.reserve(feature_cols.size());
    bool ok = true;
    for (std::size_t c = 0; c < feature_cols.size(); ++c) {
      std::int64_t code = 0;
      if (!parse_int64(fields[feature_cols[c]], code) || code < 0) {
        note_error(result.report, line_no,
                   "bad feature code in column '" + schema.feature_columns[c] + "'");
        ok = false;
        break;
      }
      std::uint32_t dense = 0;
      auto& column_map = result.vocab.per_column[c];
      auto it = column_map.find(code);
      if (it != column_map.end()) {
        dense = it->second;
      } else if (frozen_vocab == nullptr) {
        dense = result.vocab.next_index++;
        column_map.emplace(code, dense);
      }  // else: unseen at evaluation time -> OOV index 0
      row.feature_ids.push_back(dense);
    }
    if (!ok) continue;
    if (conversion == 1 && click == 0) {
      result.report.rows_rejected_label += 1;
      continue;
    }
    row.pair_id = next_pair_id++;
    row.click = click;
    row.conversion = conversion;
    result.dataset.rows.push_back(std::move(row));
    result.report.rows_loaded += 1;
  }

  if (total_data_rows > 0 &&
      static_cast<double>(result.report.rows_malformed) >
          0.01 * static_cast<double>(total_data_rows)) {
    throw DataError(path + ": " + std::to_string(result.report.rows_malformed) +
                    " of " + std::to_string(total_data_rows) +
                    " rows malformed (limit 1%)");
  }
  result.dataset.num_feature_categories = result.vocab.size();
  return result;
}

}  // namespace

void IngestSchema::validate() const {
  if (feature_columns.empty()) {
    throw ConfigError("ingest: need at least one feature column");
  }
  if (click_column.empty() || conversion_column.empty()) {
    throw ConfigError("ingest: click/conversion column names required");
  }
}

void Vocabulary::save(const std::string& path) const {
  nlohmann::json doc;
  doc["next_index"] = next_index;
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& column : per_column) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [code, dense] : column) {
      m[std::to_string(code)] = dense;
    }
    cols.push_back(std::move(m));
  }
  doc["columns"] = std::move(cols);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
}

Vocabulary Vocabulary::load(const std::string& path, const IngestSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("vocabulary parse error: " + std::string(e.what()));
  }
  Vocabulary vocab;
  vocab.next_index = doc.at("next_index");
  const auto& cols = doc.at("columns");
  if (cols.size() != schema.feature_columns.size()) {
    throw DataError("vocabulary column count does not match the schema");
  }
  vocab.per_column.resize(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (const auto& [key, value] : cols[c].items()) {
      vocab.per_column[c].emplace(std::stoll(key),
                                  value.get<std::uint32_t>());
    }
  }
  return vocab;
}

LoadResult load_csv(const std::string& path, const IngestSchema& schema) {
  return load_flat(path, schema, nullptr);
}

LoadResult load_csv_with_vocab(const std::string& path,
                               const IngestSchema& schema,
                               const Vocabulary& vocab) {
  return load_flat(path, schema, &vocab);
}

data::Dataset load_simulated_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "pair_id,feature_ids,o,r") {
    throw DataError(path + ": unexpected header '" + line + "'");
  }
  data::Dataset dataset;
  dataset.provenance = data::Provenance::synthetic;
  std::size_t line_no = 1;
  std::uint32_t max_feature = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line, ',');
    if (fields.size() != 4) {
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": expected 4 fields");
    }
    data::Row row;
    std::int64_t pair_id = 0;
    if (!parse_int64(fields[0], pair_id) || pair_id < 0) {
      throw DataError(path + " line " + std::to_string(line_no) + ": bad pair_id");
    }
    row.pair_id = static_cast<std::uint64_t>(pair_id);
    for (const std::string& part : split_line(fields[1], ';')) {
      std::int64_t id = 0;
      if (!parse_int64(part, id) || id < 0) {
        throw DataError(path + " line " + std::to_string(line_no) +
                        ": bad feature id '" + part + "'");
      }
      row.feature_ids.push_back(static_cast<std::uint32_t>(id));
      max_feature = std::max(max_feature, row.feature_ids.back());
    }
    if (!parse_binary(fields[2], row.click) ||
        !parse_binary(fields[3], row.conversion)) {
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": o and r must be 0 or 1");
    }
    dataset.rows.push_back(std::move(row));
  }
  dataset.num_feature_categories =
      dataset.rows.empty() ? 0 : static_cast<std::size_t>(max_feature) + 1;
  data::validate(dataset);
  return dataset;
}

data::SideTable load_side_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "pair_id,r_counterfactual") {
    throw DataError(path + ": unexpected header '" + line + "'");
  }
  data::SideTable side;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line, ',');
    std::int64_t pair_id = 0;
    std::uint8_t r = 0;
    if (fields.size() != 2 || !parse_int64(fields[0], pair_id) || pair_id < 0 ||
        !parse_binary(fields[1], r)) {
      throw DataError(path + " line " + std::to_string(line_no) + ": bad row");
    }
    side.pair_ids.push_back(static_cast<std::uint64_t>(pair_id));
    side.r_counterfactual.push_back(r);
  }
  return side;
}

std::pair<data::Dataset, data::Dataset> split(const data::Dataset& dataset,
                                              double validation_fraction,
                                              std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("split: validation_fraction must lie in (0,1)");
  }
  data::Dataset train, val;
  train.provenance = val.provenance = dataset.provenance;
  train.num_feature_categories = val.num_feature_categories =
      dataset.num_feature_categories;
  rng::Stream stream{seed};
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    const double u = stream.fork(i).next_unit();
    if (u < validation_fraction) {
      val.rows.push_back(dataset.rows[i]);
    } else {
      train.rows.push_back(dataset.rows[i]);
    }
  }
  return {std::move(train), std::move(val)};
}

}  // namespace escm::ingest
