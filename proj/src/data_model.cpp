#include "hdsurv/data_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "hdsurv/errors.hpp"

namespace hdsurv {

Eigen::Index FeatureBlock::column_index(std::string_view column) const {
  for (std::size_t j = 0; j < column_names.size(); ++j) {
    if (column_names[j] == column) return static_cast<Eigen::Index>(j);
  }
  return -1;
}

FeatureBlock FeatureBlock::select_rows(std::span<const int> rows) const {
  FeatureBlock out{name, column_names, Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), cols()),
                   penalty_factor};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
  }
  return out;
}

FeatureBlock FeatureBlock::select_columns(std::span<const Eigen::Index> columns) const {
  FeatureBlock out;
  out.name = name;
  out.values.resize(rows(), static_cast<Eigen::Index>(columns.size()));
  out.penalty_factor.resize(static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const auto j = columns[k];
    out.column_names.push_back(column_names[static_cast<std::size_t>(j)]);
    out.values.col(static_cast<Eigen::Index>(k)) = values.col(j);
    out.penalty_factor(static_cast<Eigen::Index>(k)) = penalty_factor(j);
  }
  return out;
}

void FeatureBlock::validate() const {
  if (static_cast<Eigen::Index>(column_names.size()) != values.cols()) {
    throw ValidationError("block '" + name + "': column name count does not match matrix width");
  }
  if (penalty_factor.size() != values.cols()) {
    throw ValidationError("block '" + name + "': penalty factor count does not match matrix width");
  }
  std::unordered_set<std::string> seen;
  for (const auto& c : column_names) {
    if (!seen.insert(c).second) {
      throw ValidationError("block '" + name + "': duplicate column '" + c + "'");
    }
  }
  for (Eigen::Index j = 0; j < penalty_factor.size(); ++j) {
    if (!(penalty_factor(j) >= 0.0)) {
      throw ValidationError("block '" + name + "': negative penalty factor");
    }
  }
}

bool Dataset::has_block(std::string_view name) const {
  return std::any_of(blocks.begin(), blocks.end(), [&](const auto& b) { return b.name == name; });
}

const FeatureBlock& Dataset::block(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw ValidationError("dataset has no block named '" + std::string(name) + "'");
}

FeatureBlock& Dataset::block(std::string_view name) {
  return const_cast<FeatureBlock&>(std::as_const(*this).block(name));
}

Eigen::VectorXd Dataset::times() const {
  Eigen::VectorXd t(size());
  for (Eigen::Index i = 0; i < size(); ++i) t(i) = records[static_cast<std::size_t>(i)].observed_time;
  return t;
}

Eigen::VectorXi Dataset::events() const {
  Eigen::VectorXi e(size());
  for (Eigen::Index i = 0; i < size(); ++i) e(i) = records[static_cast<std::size_t>(i)].event ? 1 : 0;
  return e;
}

int Dataset::event_count() const {
  return static_cast<int>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.event; }));
}

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset out;
  out.records.reserve(rows.size());
  for (int r : rows) out.records.push_back(records[static_cast<std::size_t>(r)]);
  for (const auto& b : blocks) out.blocks.push_back(b.select_rows(rows));
  return out;
}

namespace {

std::size_t column_of(const csv::Table& table, std::string_view name) {
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (table.header[j] == name) return j;
  }
  throw ParseError(table.source, 1, "missing required column '" + std::string(name) + "'");
}

template <class Row>
void check_unique_ids(const std::vector<Row>& rows, const csv::Table& table) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!seen.insert(rows[i].first).second) {
      throw ValidationError(table.source + ":" + std::to_string(table.lines[i]) +
                            ": duplicate subject id '" + rows[i].first + "'");
    }
  }
}

struct FeatureFile {
  std::string name;
  std::vector<std::string> columns;
  std::unordered_map<std::string, std::vector<double>> rows;
};

FeatureFile read_feature_file(const std::string& name, const std::filesystem::path& path) {
  const auto table = csv::read(path);
  FeatureFile file;
  file.name = name;
  file.columns.assign(table.header.begin() + 1, table.header.end());
  std::vector<std::pair<std::string, std::vector<double>>> parsed;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row[0].empty()) throw ParseError(table.source, table.lines[i], "empty subject id");
    std::vector<double> values;
    values.reserve(row.size() - 1);
    for (std::size_t j = 1; j < row.size(); ++j) values.push_back(csv::parse_cell(row[j], table, table.lines[i]));
    parsed.emplace_back(row[0], std::move(values));
  }
  check_unique_ids(parsed, table);
  for (auto& [id, values] : parsed) file.rows.emplace(id, std::move(values));
  return file;
}

}  // namespace

LoadedDataset load_dataset(const std::filesystem::path& survival_path,
                           const std::map<std::string, std::filesystem::path>& feature_paths,
                           const std::optional<std::filesystem::path>& clinical_path) {
  LoadedDataset out;

  // Survival outcomes.
  const auto surv = csv::read(survival_path);
  const auto time_col = column_of(surv, "time");
  const auto status_col = column_of(surv, "status");
  std::vector<std::pair<std::string, SurvivalRecord>> survival;
  for (std::size_t i = 0; i < surv.rows.size(); ++i) {
    const auto& row = surv.rows[i];
    const auto line = surv.lines[i];
    if (row[0].empty()) throw ParseError(surv.source, line, "empty subject id");
    const double t = csv::parse_cell(row[time_col], surv, line);
    const double s = csv::parse_cell(row[status_col], surv, line);
    if (std::isnan(t) || std::isnan(s)) throw ValidationError(surv.source + ":" + std::to_string(line) + ": missing time or status");
    if (t < 0.0) throw ValidationError(surv.source + ":" + std::to_string(line) + ": negative observed time");
    if (s != 0.0 && s != 1.0) throw ValidationError(surv.source + ":" + std::to_string(line) + ": status must be 0 or 1");
    survival.emplace_back(row[0], SurvivalRecord{row[0], t, s == 1.0});
  }
  check_unique_ids(survival, surv);

  std::vector<FeatureFile> features;
  for (const auto& [name, path] : feature_paths) features.push_back(read_feature_file(name, path));

  // Clinical characteristics.
  std::unordered_map<std::string, ClinicalRow> clinical;
  std::optional<csv::Table> clinical_table;
  if (clinical_path) {
    clinical_table = csv::read(*clinical_path);
    const auto& table = *clinical_table;
    const auto sex = column_of(table, "sex");
    const auto age = column_of(table, "age");
    const auto stage = column_of(table, "stage");
    const auto longest = column_of(table, "longest_dim");
    const auto shortest = column_of(table, "shortest_dim");
    std::vector<std::pair<std::string, ClinicalRow>> parsed;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& row = table.rows[i];
      const auto line = table.lines[i];
      ClinicalRow c{row[sex], csv::parse_cell(row[age], table, line), row[stage],
                    csv::parse_cell(row[longest], table, line), csv::parse_cell(row[shortest], table, line)};
      if (std::isnan(c.age) || std::isnan(c.longest_dim) || std::isnan(c.shortest_dim) || csv::is_missing(c.sex) ||
          csv::is_missing(c.stage)) {
        throw ValidationError(table.source + ":" + std::to_string(line) + ": missing clinical value for '" + row[0] + "'");
      }
      parsed.emplace_back(row[0], std::move(c));
    }
    check_unique_ids(parsed, table);
    for (auto& [id, c] : parsed) clinical.emplace(id, std::move(c));
  }

  // Inner join on subject id.
  std::set<std::string> all_ids;
  for (const auto& [id, _] : survival) all_ids.insert(id);
  for (const auto& f : features) {
    for (const auto& [id, _] : f.rows) all_ids.insert(id);
  }
  for (const auto& [id, _] : clinical) all_ids.insert(id);

  std::unordered_set<std::string> in_survival;
  for (const auto& [id, _] : survival) in_survival.insert(id);
  std::vector<std::string> kept;
  for (const auto& id : all_ids) {
    bool everywhere = in_survival.contains(id);
    for (const auto& f : features) everywhere = everywhere && f.rows.contains(id);
    if (clinical_path) everywhere = everywhere && clinical.contains(id);
    if (everywhere) kept.push_back(id);
  }
  out.report.rows_dropped = all_ids.size() - kept.size();
  if (kept.empty()) {
    if (!all_ids.empty()) throw ValidationError("no subject ids are shared by all input files");
    out.report.warnings.push_back("input files contain no rows; dataset is empty");
  }
  if (out.report.rows_dropped > 0) {
    out.report.warnings.push_back(std::to_string(out.report.rows_dropped) + " rows dropped");
  }

  std::unordered_map<std::string, SurvivalRecord> by_id;
  for (auto& [id, rec] : survival) by_id.emplace(id, rec);
  for (const auto& id : kept) out.dataset.records.push_back(by_id.at(id));

  const auto n = static_cast<Eigen::Index>(kept.size());
  for (const auto& f : features) {
    FeatureBlock block;
    block.name = f.name;
    block.column_names = f.columns;
    block.values.resize(n, static_cast<Eigen::Index>(f.columns.size()));
    block.penalty_factor = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(f.columns.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = f.rows.at(kept[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < block.values.cols(); ++j) block.values(i, j) = row[static_cast<std::size_t>(j)];
    }
    block.validate();
    std::vector<double> missing(static_cast<std::size_t>(block.cols()), 0.0);
    for (Eigen::Index j = 0; j < block.cols(); ++j) {
      if (n > 0) missing[static_cast<std::size_t>(j)] = static_cast<double>(block.values.col(j).array().isNaN().count()) / static_cast<double>(n);
    }
    out.report.missing_fraction.emplace(block.name, std::move(missing));
    out.dataset.blocks.push_back(std::move(block));
  }
  if (clinical_path) {
    std::vector<ClinicalRow> rows;
    rows.reserve(kept.size());
    for (const auto& id : kept) rows.push_back(clinical.at(id));
    auto block = encode_clinical(rows);
    out.dataset.blocks.push_back(std::move(block));
  }
  return out;
}

QcResult quality_control(const FeatureBlock& block, double missing_threshold, double variance_epsilon) {
  if (block.rows() == 0 || block.cols() == 0) throw ValidationError("quality_control: block '" + block.name + "' is empty");
  QcResult result;
  std::vector<Eigen::Index> keep;
  Eigen::MatrixXd values = block.values;
  const double n = static_cast<double>(block.rows());
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    auto col = values.col(j);
    const auto missing = col.array().isNaN().count();
    const double fraction = static_cast<double>(missing) / n;
    if (fraction > missing_threshold) {
      result.removed.push_back({block.column_names[static_cast<std::size_t>(j)], "missingness", fraction});
      continue;
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (!std::isnan(col(i))) sum += col(i);
    }
    const double mean = sum / static_cast<double>(col.size() - missing);
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (std::isnan(col(i))) col(i) = mean;
    }
    const double centered_mean = col.mean();
    const double variance = (col.array() - centered_mean).square().mean();
    if (variance <= variance_epsilon) {
      result.removed.push_back({block.column_names[static_cast<std::size_t>(j)], "low variance", variance});
      continue;
    }
    keep.push_back(j);
  }
  if (keep.empty()) throw ValidationError("no features survive QC in block '" + block.name + "'");
  FeatureBlock imputed = block;
  imputed.values = std::move(values);
  result.block = imputed.select_columns(keep);
  return result;
}

StageLevel stage_level(std::string_view stage_label) {
  std::string key;
  for (char c : stage_label) {
    if (!std::isspace(static_cast<unsigned char>(c))) key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  if (key.starts_with("STAGE")) key.erase(0, 5);
  if (key == "I" || key == "IA" || key == "IB") return StageLevel::A;
  if (key == "II" || key == "IIA" || key == "IIB") return StageLevel::B;
  if (key == "III" || key == "IIIA" || key == "IIIB" || key == "IV") return StageLevel::C;
  throw ValidationError("unknown cancer stage '" + std::string(stage_label) + "'");
}

FeatureBlock encode_clinical(std::span<const ClinicalRow> rows) {
  FeatureBlock block;
  block.name = "clinical";
  block.column_names = clinical_column_names();
  const auto n = static_cast<Eigen::Index>(rows.size());
  block.values.resize(n, 5);
  block.penalty_factor = Eigen::VectorXd::Zero(5);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    double sex;
    if (r.sex == "F" || r.sex == "f" || r.sex == "female" || r.sex == "FEMALE") {
      sex = 0.0;
    } else if (r.sex == "M" || r.sex == "m" || r.sex == "male" || r.sex == "MALE") {
      sex = 1.0;
    } else {
      throw ValidationError("unknown sex '" + r.sex + "'");
    }
    const auto level = stage_level(r.stage);
    block.values(i, 0) = sex;
    block.values(i, 1) = r.age;
    block.values(i, 2) = r.longest_dim * r.shortest_dim;
    block.values(i, 3) = level == StageLevel::A ? 1.0 : 0.0;
    block.values(i, 4) = level == StageLevel::B ? 1.0 : 0.0;
  }
  return block;
}

ColumnScaling column_scaling(const Eigen::MatrixXd& values) {
  ColumnScaling s;
  s.mean = values.colwise().mean().transpose();
  s.scale.resize(values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    s.scale(j) = std::sqrt((values.col(j).array() - s.mean(j)).square().mean());
  }
  return s;
}

StandardizedBlock standardize(const FeatureBlock& block) {
  if (block.values.hasNaN()) throw ValidationError("standardize: block '" + block.name + "' has missing values");
  StandardizedBlock out{block, column_scaling(block.values)};
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    if (!(out.scaling.scale(j) > 0.0)) {
      throw ValidationError("standardize: column '" + block.column_names[static_cast<std::size_t>(j)] +
                            "' has zero scale");
    }
    out.block.values.col(j) = (block.values.col(j).array() - out.scaling.mean(j)) / out.scaling.scale(j);
  }
  return out;
}

Eigen::VectorXd back_transform(const Eigen::VectorXd& standardized_coefficients, const ColumnScaling& scaling,
                               double* offset) {
  Eigen::VectorXd b = standardized_coefficients.array() / scaling.scale.array();
  if (offset) *offset = -b.dot(scaling.mean);
  return b;
}

}  // namespace hdsurv
