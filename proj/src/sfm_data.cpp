#include "pathfair/sfm_data.hpp"

#include "pathfair/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pathfair {

using nlohmann::json;

// ---------------------------------------------------------------------------
// RoleManifest

void RoleManifest::validate() const {
  if (sensitive_column.empty()) throw Error(ErrorKind::manifest, "sensitive column not set");
  if (outcome_column.empty()) throw Error(ErrorKind::manifest, "outcome column not set");
  if (x0_label == x1_label)
    throw Error(ErrorKind::manifest, "x0 and x1 labels must differ");
  if (mediator_columns.empty() && !mediator_prefix)
    throw Error(ErrorKind::manifest, "mediator set is empty");

  std::map<std::string, std::string> owner;
  auto claim = [&](const std::string& col, const std::string& role) {
    auto [it, fresh] = owner.emplace(col, role);
    if (!fresh)
      throw Error(ErrorKind::manifest,
                  "column '" + col + "' assigned to both " + it->second + " and " + role);
  };
  claim(sensitive_column, "sensitive");
  claim(outcome_column, "outcome");
  for (const auto& c : confounder_columns) claim(c, "confounders");
  for (const auto& c : mediator_columns) claim(c, "mediators");
  for (const auto& c : demographic_columns)
    if (std::find(confounder_columns.begin(), confounder_columns.end(), c) ==
        confounder_columns.end())
      throw Error(ErrorKind::manifest, "demographic column '" + c + "' is not a confounder");
}

RoleManifest RoleManifest::from_json(const json& j) {
  try {
    RoleManifest m;
    const auto& s = j.at("sensitive");
    m.sensitive_column = s.at("column").get<std::string>();
    auto label = [](const json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    m.x0_label = label(s.at("x0"));
    m.x1_label = label(s.at("x1"));
    m.outcome_column = j.at("outcome").get<std::string>();
    m.confounder_columns = j.value("confounders", std::vector<std::string>{});
    m.demographic_columns = j.value("demographics", std::vector<std::string>{});
    const auto& med = j.at("mediators");
    if (med.is_object()) {
      m.mediator_prefix = med.at("prefix").get<std::string>();
    } else {
      for (const auto& e : med) {
        if (e.is_object())
          m.mediator_prefix = e.at("prefix").get<std::string>();
        else
          m.mediator_columns.push_back(e.get<std::string>());
      }
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::manifest, std::string("malformed manifest: ") + e.what());
  }
}

json RoleManifest::to_json() const {
  json j;
  j["sensitive"] = {{"column", sensitive_column}, {"x0", x0_label}, {"x1", x1_label}};
  j["outcome"] = outcome_column;
  j["confounders"] = confounder_columns;
  if (!demographic_columns.empty()) j["demographics"] = demographic_columns;
  if (mediator_prefix)
    j["mediators"] = json{{"prefix", *mediator_prefix}};
  else
    j["mediators"] = mediator_columns;
  return j;
}

RoleManifest RoleManifest::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::manifest, "cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::manifest, std::string("manifest is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Standardization

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const json& j) {
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

json Standardization::to_json() const {
  return {{"z_mean", vec_json(z_mean)},
          {"z_sd", vec_json(z_sd)},
          {"w_mean", vec_json(w_mean)},
          {"w_sd", vec_json(w_sd)}};
}

Standardization Standardization::from_json(const json& j) {
  return {json_vec(j.at("z_mean")), json_vec(j.at("z_sd")), json_vec(j.at("w_mean")),
          json_vec(j.at("w_sd"))};
}

std::string Standardization::hash() const {
  std::string bytes;
  for (const Vector* v : {&z_mean, &z_sd, &w_mean, &w_sd}) {
    bytes += format_double(static_cast<double>(v->size())) + ';';
    for (double d : *v) bytes += format_double(d) + ',';
  }
  return sha256_hex(bytes);
}

// ---------------------------------------------------------------------------
// SfmDataset

void SfmDataset::validate() const {
  const Index rows = n();
  if (z.rows() != rows || w.rows() != rows || y.size() != rows)
    throw Error(ErrorKind::data, "block row counts disagree");
  if (static_cast<Index>(z_names.size()) != z.cols() ||
      static_cast<Index>(w_names.size()) != w.cols() ||
      static_cast<Index>(z_demographic.size()) != z.cols())
    throw Error(ErrorKind::data, "column names do not match block widths");
  if (w.cols() < 1) throw Error(ErrorKind::data, "mediator block is empty");
  Index ones = 0;
  for (Index i = 0; i < rows; ++i) {
    if (x(i) != 0.0 && x(i) != 1.0) throw Error(ErrorKind::data, "x outside {0,1}");
    if (y(i) != 0.0 && y(i) != 1.0) throw Error(ErrorKind::data, "y outside {0,1}");
    ones += x(i) == 1.0;
  }
  if (ones == 0 || ones == rows) throw Error(ErrorKind::data, "an x group is empty");
  if (!z.allFinite() || !w.allFinite()) throw Error(ErrorKind::data, "non-finite feature value");
}

std::string SfmDataset::mediator_schema() const {
  std::string bytes = std::to_string(w.cols()) + ':';
  for (const auto& name : w_names) bytes += name + '\x1f';
  return sha256_hex(bytes);
}

RoleManifest SfmDataset::manifest() const {
  RoleManifest m;
  m.sensitive_column = sensitive_name;
  m.x0_label = x0_label;
  m.x1_label = x1_label;
  m.outcome_column = outcome_name;
  m.confounder_columns = z_names;
  for (std::size_t j = 0; j < z_names.size(); ++j)
    if (z_demographic[j]) m.demographic_columns.push_back(z_names[j]);
  m.mediator_columns = w_names;
  return m;
}

namespace {

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t')) --last;
  if (first < last && *first == '+') ++first;
  double v = 0.0;
  auto res = std::from_chars(first, last, v);
  if (first == last || res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
    throw Error(ErrorKind::parse, "row " + std::to_string(row) + ", column '" + column +
                                      "': non-numeric value '" + cell + "'");
  return v;
}

}  // namespace

SfmDataset load_dataset(std::istream& in, const RoleManifest& manifest) {
  manifest.validate();
  const csv::Table table = csv::read(in);

  auto require = [&](const std::string& name) -> std::size_t {
    const long c = table.column(name);
    if (c < 0) throw Error(ErrorKind::manifest, "column missing from CSV: " + name);
    return static_cast<std::size_t>(c);
  };

  const std::size_t xcol = require(manifest.sensitive_column);
  const std::size_t ycol = require(manifest.outcome_column);
  std::vector<std::size_t> zcols, wcols;
  for (const auto& c : manifest.confounder_columns) zcols.push_back(require(c));
  for (const auto& c : manifest.demographic_columns) require(c);
  std::vector<std::string> w_names = manifest.mediator_columns;
  for (const auto& c : w_names) wcols.push_back(require(c));
  if (manifest.mediator_prefix) {
    std::set<std::string> taken(manifest.confounder_columns.begin(),
                                manifest.confounder_columns.end());
    taken.insert(manifest.sensitive_column);
    taken.insert(manifest.outcome_column);
    taken.insert(w_names.begin(), w_names.end());
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const auto& h = table.header[c];
      if (h.rfind(*manifest.mediator_prefix, 0) == 0 && !taken.count(h)) {
        w_names.push_back(h);
        wcols.push_back(c);
      }
    }
  }
  if (wcols.empty()) throw Error(ErrorKind::manifest, "no mediator columns matched");

  const auto n = static_cast<Index>(table.rows.size());
  SfmDataset d;
  d.x.resize(n);
  d.y.resize(n);
  d.z.resize(n, static_cast<Index>(zcols.size()));
  d.w.resize(n, static_cast<Index>(wcols.size()));
  d.z_names = manifest.confounder_columns;
  d.w_names = w_names;
  for (const auto& name : d.z_names)
    d.z_demographic.push_back(std::find(manifest.demographic_columns.begin(),
                                        manifest.demographic_columns.end(),
                                        name) != manifest.demographic_columns.end());
  d.sensitive_name = manifest.sensitive_column;
  d.outcome_name = manifest.outcome_column;
  d.x0_label = manifest.x0_label;
  d.x1_label = manifest.x1_label;

  std::set<std::string> unseen;
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const std::size_t r = static_cast<std::size_t>(i);
    const std::string& xv = row[xcol];
    if (xv == manifest.x0_label)
      d.x(i) = 0.0;
    else if (xv == manifest.x1_label)
      d.x(i) = 1.0;
    else
      unseen.insert(xv);
    const double yv = parse_number(row[ycol], r, manifest.outcome_column);
    if (yv != 0.0 && yv != 1.0)
      throw Error(ErrorKind::coding, "row " + std::to_string(r) + ": outcome '" + row[ycol] +
                                         "' is not 0/1");
    d.y(i) = yv;
    for (std::size_t j = 0; j < zcols.size(); ++j)
      d.z(i, static_cast<Index>(j)) = parse_number(row[zcols[j]], r, d.z_names[j]);
    for (std::size_t j = 0; j < wcols.size(); ++j)
      d.w(i, static_cast<Index>(j)) = parse_number(row[wcols[j]], r, d.w_names[j]);
  }
  if (!unseen.empty()) {
    std::string list;
    for (const auto& u : unseen) list += (list.empty() ? "" : ", ") + ("\"" + u + "\"");
    throw Error(ErrorKind::coding, "sensitive column '" + manifest.sensitive_column +
                                       "' has values outside {" + manifest.x0_label + ", " +
                                       manifest.x1_label + "}: " + list);
  }
  d.validate();
  return d;
}

SfmDataset load_dataset(const std::filesystem::path& csv_path, const RoleManifest& manifest) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open " + csv_path.string());
  return load_dataset(in, manifest);
}

void write_csv(const SfmDataset& d, std::ostream& out) {
  std::vector<std::string> header{d.sensitive_name};
  header.insert(header.end(), d.z_names.begin(), d.z_names.end());
  header.insert(header.end(), d.w_names.begin(), d.w_names.end());
  header.push_back(d.outcome_name);
  csv::write_row(out, header);
  std::vector<std::string> row;
  for (Index i = 0; i < d.n(); ++i) {
    row.clear();
    row.push_back(d.x(i) == 1.0 ? d.x1_label : d.x0_label);
    for (Index j = 0; j < d.dim_z(); ++j) row.push_back(format_double(d.z(i, j)));
    for (Index j = 0; j < d.dim_w(); ++j) row.push_back(format_double(d.w(i, j)));
    row.push_back(d.y(i) == 1.0 ? "1" : "0");
    csv::write_row(out, row);
  }
}

void write_csv(const SfmDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
  write_csv(d, out);
}

// ---------------------------------------------------------------------------
// Standardization transforms

namespace {

void column_stats(const Matrix& m, Vector& mean_out, Vector& sd_out) {
  const double rows = static_cast<double>(m.rows());
  mean_out = m.colwise().sum().transpose() / rows;
  sd_out.resize(m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    const double var = (m.col(j).array() - mean_out(j)).square().sum() / rows;
    const double sd = std::sqrt(var);
    sd_out(j) = sd < 1e-12 ? 1.0 : sd;
  }
}

void transform(Matrix& m, const Vector& mu, const Vector& sd) {
  for (Index j = 0; j < m.cols(); ++j) m.col(j) = (m.col(j).array() - mu(j)) / sd(j);
}

std::string state_of(const SfmDataset& d) {
  return d.standardization ? d.standardization->hash() : std::string("raw");
}

}  // namespace

SfmDataset standardize(const SfmDataset& d, const SfmDataset& reference) {
  if (d.dim_z() != reference.dim_z() || d.dim_w() != reference.dim_w())
    throw Error(ErrorKind::schema_mismatch, "standardize: dimension mismatch with reference");
  if (state_of(d) != state_of(reference))
    throw Error(ErrorKind::schema_mismatch,
                "standardize: dataset and reference are in different standardization states");
  Standardization step;
  column_stats(reference.z, step.z_mean, step.z_sd);
  column_stats(reference.w, step.w_mean, step.w_sd);

  SfmDataset out = d;
  transform(out.z, step.z_mean, step.z_sd);
  transform(out.w, step.w_mean, step.w_sd);

  if (d.standardization) {
    // raw = prev.mean + prev.sd * (prev.sd_step * new + step.mean)
    const auto& prev = *d.standardization;
    Standardization composed;
    composed.z_mean = prev.z_mean.array() + prev.z_sd.array() * step.z_mean.array();
    composed.z_sd = prev.z_sd.array() * step.z_sd.array();
    composed.w_mean = prev.w_mean.array() + prev.w_sd.array() * step.w_mean.array();
    composed.w_sd = prev.w_sd.array() * step.w_sd.array();
    out.standardization = composed;
  } else {
    out.standardization = step;
  }
  return out;
}

SfmDataset apply_standardization(const SfmDataset& d, const Standardization& s) {
  if (d.standardization) {
    if (d.standardization->hash() == s.hash()) return d;
    throw Error(ErrorKind::schema_mismatch,
                "dataset already carries a different standardization");
  }
  if (s.z_mean.size() != d.dim_z() || s.w_mean.size() != d.dim_w())
    throw Error(ErrorKind::schema_mismatch, "standardization width mismatch");
  SfmDataset out = d;
  transform(out.z, s.z_mean, s.z_sd);
  transform(out.w, s.w_mean, s.w_sd);
  out.standardization = s;
  return out;
}

SfmDataset unstandardize(const SfmDataset& d) {
  if (!d.standardization) return d;
  const auto& s = *d.standardization;
  SfmDataset out = d;
  for (Index j = 0; j < out.dim_z(); ++j)
    out.z.col(j) = out.z.col(j).array() * s.z_sd(j) + s.z_mean(j);
  for (Index j = 0; j < out.dim_w(); ++j)
    out.w.col(j) = out.w.col(j).array() * s.w_sd(j) + s.w_mean(j);
  out.standardization.reset();
  return out;
}

SfmDataset subset(const SfmDataset& d, std::span<const Index> rows) {
  SfmDataset out = d;
  out.x = take(d.x, rows);
  out.y = take(d.y, rows);
  out.z = take_rows(d.z, rows);
  out.w = take_rows(d.w, rows);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
  if (!(train_fraction > 0 && val_fraction > 0 && test_fraction > 0))
    throw Error(ErrorKind::config, "split fractions must be positive");
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
    throw Error(ErrorKind::config, "split fractions must sum to 1");
}

json SplitIndices::to_json() const {
  return {{"train", train}, {"val", val}, {"test", test}};
}

namespace {

// Rounds each target to floor or ceil so the integers sum to `total`, giving the
// extra units to the largest fractional parts (ties: lower stratum index).
std::vector<Index> apportion(const std::vector<double>& targets, Index total) {
  std::vector<Index> out(targets.size());
  Index assigned = 0;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    out[s] = static_cast<Index>(std::floor(targets[s] + 1e-12));
    assigned += out[s];
  }
  std::vector<std::size_t> order(targets.size());
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return targets[a] - static_cast<double>(out[a]) > targets[b] - static_cast<double>(out[b]);
  });
  for (std::size_t k = 0; assigned < total && k < order.size(); ++k) {
    if (targets[order[k]] - static_cast<double>(out[order[k]]) > 1e-12) {
      ++out[order[k]];
      ++assigned;
    }
  }
  return out;
}

}  // namespace

SplitIndices split_indices(const SfmDataset& d, const SplitSpec& spec) {
  spec.validate();
  const Index n = d.n();

  std::vector<IndexList> strata(spec.stratify_on == StratifyOn::outcome ? 2 : 4);
  for (Index i = 0; i < n; ++i) {
    const auto yk = static_cast<std::size_t>(d.y(i));
    const auto xk = static_cast<std::size_t>(d.x(i));
    strata[spec.stratify_on == StratifyOn::outcome ? yk : 2 * yk + xk].push_back(i);
  }

  std::vector<double> cut1, cut2;
  for (const auto& s : strata) {
    const auto m = static_cast<double>(s.size());
    cut1.push_back(spec.train_fraction * m);
    cut2.push_back((spec.train_fraction + spec.val_fraction) * m);
  }
  const auto total1 = static_cast<Index>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto total2 = static_cast<Index>(
      std::llround((spec.train_fraction + spec.val_fraction) * static_cast<double>(n)));
  std::vector<Index> a = apportion(cut1, total1);
  std::vector<Index> b = apportion(cut2, total2);
  for (std::size_t s = 0; s < strata.size(); ++s) b[s] = std::max(b[s], a[s]);

  SplitIndices out;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    IndexList rows = strata[s];
    Rng rng = make_rng(spec.seed, s);
    shuffle(rows, rng);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto pos = static_cast<Index>(k);
      (pos < a[s] ? out.train : pos < b[s] ? out.val : out.test).push_back(rows[k]);
    }
  }
  for (IndexList* part : {&out.train, &out.val, &out.test}) std::sort(part->begin(), part->end());

  auto check = [&](const IndexList& part, const char* name) {
    bool has[2][2] = {{false, false}, {false, false}};  // [y][x]
    for (Index i : part) has[static_cast<int>(d.y(i))][static_cast<int>(d.x(i))] = true;
    const bool y0 = has[0][0] || has[0][1], y1 = has[1][0] || has[1][1];
    const bool x0 = has[0][0] || has[1][0], x1 = has[0][1] || has[1][1];
    if (!(y0 && y1 && x0 && x1))
      throw Error(ErrorKind::infeasible_split,
                  std::string(name) + " partition lacks an outcome class or an x group");
  };
  check(out.train, "train");
  check(out.val, "validation");
  check(out.test, "test");
  return out;
}

Partitions split(const SfmDataset& d, const SplitSpec& spec) {
  SplitIndices idx = split_indices(d, spec);
  return {subset(d, idx.train), subset(d, idx.val), subset(d, idx.test), std::move(idx)};
}

}  // namespace pathfair
