#include "rotenc/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rotenc {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::array<const char*, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar",
    "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_whitespace(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

bool parse_double(std::string text, double& out) {
  // QM9 exports write exponents as "*^".
  if (auto pos = text.find("*^"); pos != std::string::npos) text.replace(pos, 2, "e");
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

MoleculeRecord record_from_json(const json& j, const std::string& source, std::size_t line) {
  if (!j.is_object()) parse_error(source, line, "record must be a JSON object");
  static const std::set<std::string> known{"id", "z", "xyz", "bonds", "targets"};
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) parse_error(source, line, "unknown field '" + key + "'");
  }
  for (const char* required : {"id", "z", "xyz", "targets"}) {
    if (!j.contains(required)) parse_error(source, line, std::string("missing field '") + required + "'");
  }

  MoleculeRecord r;
  if (!j["id"].is_string() || j["id"].get<std::string>().empty()) parse_error(source, line, "'id' must be a non-empty string");
  r.id = j["id"].get<std::string>();

  if (!j["z"].is_array() || j["z"].empty()) parse_error(source, line, "'z' must be a non-empty array");
  for (const auto& z : j["z"]) {
    if (!z.is_number_integer() || z.get<long long>() <= 0) parse_error(source, line, "'z' entries must be positive integers");
    r.atomic_numbers.push_back(static_cast<int>(z.get<long long>()));
  }

  const auto& xyz = j["xyz"];
  const std::size_t n = r.atomic_numbers.size();
  if (!xyz.is_array() || xyz.size() != 3 * n) {
    parse_error(source, line, "'xyz' must hold 3 x " + std::to_string(n) + " numbers");
  }
  r.coords.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < 3 * n; ++i) {
    if (!xyz[i].is_number()) parse_error(source, line, "'xyz' entries must be numbers");
    const double v = xyz[i].get<double>();
    if (!std::isfinite(v)) parse_error(source, line, "non-finite coordinate");
    r.coords(static_cast<Eigen::Index>(i / 3), static_cast<Eigen::Index>(i % 3)) = v;
  }

  if (j.contains("bonds")) {
    if (!j["bonds"].is_array()) parse_error(source, line, "'bonds' must be an array");
    std::vector<Bond> bonds;
    for (const auto& b : j["bonds"]) {
      if (!b.is_array() || b.size() != 3 || !b[0].is_number_integer() || !b[1].is_number_integer() ||
          !b[2].is_number_integer()) {
        parse_error(source, line, "bonds must be [u, v, order] integer triples");
      }
      bonds.push_back(Bond{b[0].get<ad::Index>(), b[1].get<ad::Index>(), b[2].get<int>()});
    }
    r.bonds = std::move(bonds);
  }

  if (!j["targets"].is_object() || j["targets"].empty()) parse_error(source, line, "'targets' must be a non-empty object");
  for (const auto& [task, value] : j["targets"].items()) {
    if (!value.is_number()) parse_error(source, line, "target '" + task + "' must be a number");
    const double v = value.get<double>();
    if (!std::isfinite(v)) parse_error(source, line, "target '" + task + "' is not finite");
    r.targets.emplace(task, v);
  }

  try {
    validate(r);
  } catch (const Error& e) {
    parse_error(source, line, e.what());
  }
  return r;
}

}  // namespace

void validate(const MoleculeRecord& record) {
  if (record.id.empty()) throw Error(ErrorCode::InvalidInput, "record id is empty");
  if (record.atomic_numbers.empty()) throw Error(ErrorCode::EmptyMolecule, "record " + record.id + " has no atoms");
  validate(record.cloud());
  const auto n = static_cast<ad::Index>(record.atomic_numbers.size());
  if (record.bonds) {
    for (const Bond& b : *record.bonds) {
      if (b.u < 0 || b.u >= n || b.v < 0 || b.v >= n || b.u == b.v) {
        throw Error(ErrorCode::InvalidInput, "record " + record.id + " has an invalid bond (" + std::to_string(b.u) +
                                                 ", " + std::to_string(b.v) + ")");
      }
      if (b.order < 1 || b.order > 4) {
        throw Error(ErrorCode::InvalidInput, "record " + record.id + " has bond order " + std::to_string(b.order));
      }
    }
  }
  if (record.targets.empty()) throw Error(ErrorCode::InvalidInput, "record " + record.id + " has no targets");
  for (const auto& [task, v] : record.targets) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidInput, "record " + record.id + " target " + task + " not finite");
  }
}

std::vector<MoleculeRecord> parse_dataset(std::istream& in, const std::string& source) {
  std::vector<MoleculeRecord> records;
  std::set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      parse_error(source, line, std::string("malformed JSON: ") + e.what());
    }
    MoleculeRecord r = record_from_json(j, source, line);
    if (!ids.insert(r.id).second) {
      throw Error(ErrorCode::DuplicateId, source + ":" + std::to_string(line) + ": duplicate id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  std::sort(records.begin(), records.end(), [](const MoleculeRecord& a, const MoleculeRecord& b) { return a.id < b.id; });
  return records;
}

std::vector<MoleculeRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open dataset " + path.string());
  return parse_dataset(in, path.string());
}

std::string format_record(const MoleculeRecord& record) {
  ordered_json j;
  j["id"] = record.id;
  j["z"] = record.atomic_numbers;
  std::vector<double> xyz;
  xyz.reserve(static_cast<std::size_t>(record.coords.size()));
  for (Eigen::Index i = 0; i < record.coords.rows(); ++i) {
    for (Eigen::Index c = 0; c < 3; ++c) xyz.push_back(record.coords(i, c));
  }
  j["xyz"] = xyz;
  if (record.bonds) {
    ordered_json bonds = ordered_json::array();
    for (const Bond& b : *record.bonds) bonds.push_back({b.u, b.v, b.order});
    j["bonds"] = bonds;
  }
  ordered_json targets = ordered_json::object();
  for (const auto& [task, v] : record.targets) targets[task] = v;
  j["targets"] = targets;
  return j.dump();
}

void write_dataset(std::ostream& out, const std::vector<MoleculeRecord>& records) {
  for (const MoleculeRecord& r : records) out << format_record(r) << '\n';
}

void write_dataset(const std::filesystem::path& path, const std::vector<MoleculeRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write dataset " + path.string());
  write_dataset(out, records);
}

int element_number(const std::string& symbol) {
  if (!symbol.empty() && std::all_of(symbol.begin(), symbol.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const int z = std::stoi(symbol);
    if (z >= 1 && z <= static_cast<int>(kElements.size())) return z;
  }
  std::string canonical = symbol;
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    canonical[i] = static_cast<char>(i == 0 ? std::toupper(static_cast<unsigned char>(canonical[i]))
                                            : std::tolower(static_cast<unsigned char>(canonical[i])));
  }
  for (std::size_t i = 0; i < kElements.size(); ++i) {
    if (canonical == kElements[i]) return static_cast<int>(i + 1);
  }
  throw Error(ErrorCode::UnknownElement, "unknown element symbol '" + symbol + "'");
}

std::vector<XyzFrame> parse_xyz(std::istream& in, const std::string& source) {
  std::vector<XyzFrame> frames;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const std::string count_text = trim(text);
    if (count_text.empty()) continue;
    long count = 0;
    auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
    if (ec != std::errc() || ptr != count_text.data() + count_text.size() || count <= 0) {
      parse_error(source, line, "expected a positive atom count, got '" + count_text + "'");
    }
    XyzFrame frame;
    if (!std::getline(in, frame.comment)) parse_error(source, line + 1, "missing comment line");
    ++line;
    if (!frame.comment.empty() && frame.comment.back() == '\r') frame.comment.pop_back();
    frame.coords.resize(count, 3);
    for (long i = 0; i < count; ++i) {
      if (!std::getline(in, text)) parse_error(source, line + 1, "unexpected end of file inside a frame");
      ++line;
      const auto tokens = split_whitespace(text);
      if (tokens.size() < 4) parse_error(source, line, "atom line needs 'symbol x y z'");
      try {
        frame.atomic_numbers.push_back(element_number(tokens[0]));
      } catch (const Error& e) {
        parse_error(source, line, e.what());
      }
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        if (!parse_double(tokens[static_cast<std::size_t>(c + 1)], v)) {
          parse_error(source, line, "bad coordinate '" + tokens[static_cast<std::size_t>(c + 1)] + "'");
        }
        frame.coords(i, c) = v;
      }
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::string xyz_frame_id(const XyzFrame& frame, std::size_t index) {
  const std::string head = trim(frame.comment.substr(0, frame.comment.find('\t')));
  const auto tokens = split_whitespace(head);
  if (tokens.empty()) return "mol" + std::to_string(index);
  std::string id = tokens.front();
  for (std::size_t i = 1; i < tokens.size(); ++i) id += "_" + tokens[i];
  return id;
}

std::map<std::string, std::map<std::string, double>> parse_targets_table(std::istream& in, char delimiter,
                                                                         const std::string& source) {
  std::string header;
  if (!std::getline(in, header)) parse_error(source, 1, "targets table is empty");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (delimiter == '\0') delimiter = header.find('\t') != std::string::npos ? '\t' : ',';

  auto split_row = [delimiter](const std::string& row) {
    std::vector<std::string> cells;
    std::stringstream ss(row);
    for (std::string cell; std::getline(ss, cell, delimiter);) cells.push_back(trim(cell));
    if (!row.empty() && row.back() == delimiter) cells.emplace_back();
    return cells;
  };

  const auto columns = split_row(header);
  if (columns.size() < 2) parse_error(source, 1, "targets table needs an id column and at least one task");
  std::map<std::string, std::map<std::string, double>> table;
  std::string text;
  std::size_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (trim(text).empty()) continue;
    const auto cells = split_row(text);
    if (cells.size() != columns.size()) {
      parse_error(source, line, "expected " + std::to_string(columns.size()) + " cells, got " + std::to_string(cells.size()));
    }
    std::map<std::string, double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) parse_error(source, line, "bad value '" + cells[c] + "' for " + columns[c]);
      row.emplace(columns[c], v);
    }
    if (!table.emplace(cells[0], std::move(row)).second) {
      throw Error(ErrorCode::DuplicateId, source + ":" + std::to_string(line) + ": duplicate id '" + cells[0] + "'");
    }
  }
  return table;
}

std::vector<MoleculeRecord> convert_xyz(const std::filesystem::path& xyz, const std::filesystem::path& targets,
                                        char delimiter) {
  std::ifstream xyz_in(xyz);
  if (!xyz_in) throw Error(ErrorCode::IoError, "cannot open " + xyz.string());
  std::ifstream targets_in(targets);
  if (!targets_in) throw Error(ErrorCode::IoError, "cannot open " + targets.string());

  const auto frames = parse_xyz(xyz_in, xyz.string());
  const auto table = parse_targets_table(targets_in, delimiter, targets.string());
  std::vector<MoleculeRecord> records;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    MoleculeRecord r;
    r.id = xyz_frame_id(frames[i], i);
    if (!ids.insert(r.id).second) throw Error(ErrorCode::DuplicateId, "duplicate molecule id '" + r.id + "' in " + xyz.string());
    auto it = table.find(r.id);
    if (it == table.end()) throw Error(ErrorCode::ParseError, "no targets row for molecule '" + r.id + "'");
    r.atomic_numbers = frames[i].atomic_numbers;
    r.coords = frames[i].coords;
    r.targets = it->second;
    validate(r);
    records.push_back(std::move(r));
  }
  std::sort(records.begin(), records.end(), [](const MoleculeRecord& a, const MoleculeRecord& b) { return a.id < b.id; });
  return records;
}

// ---------------------------------------------------------------------------

std::vector<double> RbfParams::centers() const {
  std::vector<double> c(static_cast<std::size_t>(count));
  for (ad::Index i = 0; i < count; ++i) {
    c[static_cast<std::size_t>(i)] = count == 1 ? min : min + (max - min) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return c;
}

Eigen::RowVectorXd rbf_expand(double distance, const std::vector<double>& centers, double gamma) {
  if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidInput, "rbf gamma must be positive");
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(centers.size()));
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double d = distance - centers[i];
    v(static_cast<Eigen::Index>(i)) = std::exp(-gamma * d * d);
  }
  return v;
}

namespace {

ad::Index width_of(EdgeFeatureMode mode, bool has_bonds, const RbfParams& rbf) {
  switch (mode) {
    case EdgeFeatureMode::automatic: return has_bonds ? bond_feature_width : rbf.count;
    case EdgeFeatureMode::bond: return bond_feature_width;
    case EdgeFeatureMode::rbf: return rbf.count;
    case EdgeFeatureMode::none: return 0;
  }
  return 0;
}

}  // namespace

MolecularGraph build_graph(const MoleculeRecord& record, const GraphOptions& options) {
  if (record.atomic_numbers.empty()) throw Error(ErrorCode::EmptyMolecule, "record " + record.id + " has no atoms");
  MolecularGraph g;
  g.atomic_numbers = record.atomic_numbers;
  for (const auto& [task, v] : record.targets) g.targets.push_back(v);

  const bool use_bonds = record.bonds.has_value() && options.edge_features != EdgeFeatureMode::rbf;
  if (options.edge_features == EdgeFeatureMode::bond && !record.bonds) {
    throw Error(ErrorCode::InvalidInput, "record " + record.id + " has no bonds but bond features were requested");
  }
  const ad::Index width = width_of(options.edge_features, record.bonds.has_value(), options.rbf);
  const std::vector<double> centers = options.rbf.centers();
  std::vector<Eigen::RowVectorXd> rows;

  auto push = [&](ad::Index u, ad::Index v, const Eigen::RowVectorXd& feature) {
    g.edges.emplace_back(u, v);
    rows.push_back(feature);
    g.edges.emplace_back(v, u);
    rows.push_back(feature);
  };

  if (use_bonds) {
    for (const Bond& b : *record.bonds) {
      Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(width);
      if (width == bond_feature_width) f(b.order - 1) = 1.0;
      push(b.u, b.v, f);
    }
  } else {
    if (!(options.cutoff > 0.0)) throw Error(ErrorCode::InvalidInput, "distance cutoff must be positive");
    const ad::Index n = record.coords.rows();
    for (ad::Index i = 0; i < n; ++i) {
      for (ad::Index j = i + 1; j < n; ++j) {
        const double d = (record.coords.row(i) - record.coords.row(j)).norm();
        if (d >= options.cutoff) continue;
        push(i, j, width > 0 ? rbf_expand(d, centers, options.rbf.gamma) : Eigen::RowVectorXd(0));
      }
    }
  }
  g.edge_features.resize(static_cast<ad::Index>(rows.size()), width);
  for (std::size_t e = 0; e < rows.size(); ++e) {
    if (width > 0) g.edge_features.row(static_cast<ad::Index>(e)) = rows[e];
  }
  return g;
}

ad::Index edge_width_for(const std::vector<MoleculeRecord>& records, const GraphOptions& options) {
  if (records.empty()) throw Error(ErrorCode::NoData, "no records");
  const ad::Index width = width_of(options.edge_features, records.front().bonds.has_value(), options.rbf);
  for (const MoleculeRecord& r : records) {
    if (width_of(options.edge_features, r.bonds.has_value(), options.rbf) != width) {
      throw Error(ErrorCode::InvalidInput,
                  "records mix explicit bonds and bond-free geometry; choose edge_features rbf or none");
    }
  }
  return width;
}

Eigen::RowVectorXd distance_descriptor(const Coords<double>& coords, double cutoff, const RbfParams& rbf) {
  const std::vector<double> centers = rbf.centers();
  const ad::Index n = coords.rows();
  std::vector<Eigen::RowVectorXd> terms;
  for (ad::Index i = 0; i < n; ++i) {
    for (ad::Index j = i + 1; j < n; ++j) {
      const double d = (coords.row(i) - coords.row(j)).norm();
      if (d < cutoff) terms.push_back(rbf_expand(d, centers, rbf.gamma));
    }
  }
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(rbf.count);
  if (terms.empty()) return out;
  std::vector<double> column(terms.size());
  for (ad::Index c = 0; c < rbf.count; ++c) {
    for (std::size_t t = 0; t < terms.size(); ++t) column[t] = terms[t](c);
    out(c) = order_independent_sum(column) / static_cast<double>(terms.size());
  }
  return out;
}

double radius_of_gyration(const Coords<double>& coords) {
  const Coords<double> centered = coords.rowwise() - centroid(coords).transpose();
  std::vector<double> sq(static_cast<std::size_t>(centered.rows()));
  for (Eigen::Index i = 0; i < centered.rows(); ++i) sq[static_cast<std::size_t>(i)] = centered.row(i).squaredNorm();
  return std::sqrt(order_independent_sum(sq) / static_cast<double>(centered.rows()));
}

// ---------------------------------------------------------------------------

Eigen::RowVectorXd Normalizer::apply(const Eigen::RowVectorXd& raw) const {
  if (raw.size() != mean.size()) throw Error(ErrorCode::ShapeError, "normalizer width mismatch");
  return (raw - mean).cwiseQuotient(stddev);
}

Eigen::RowVectorXd Normalizer::invert(const Eigen::RowVectorXd& normalized) const {
  if (normalized.size() != mean.size()) throw Error(ErrorCode::ShapeError, "normalizer width mismatch");
  return normalized.cwiseProduct(stddev) + mean;
}

std::vector<std::string> task_names(const std::vector<MoleculeRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::NoData, "no records");
  std::vector<std::string> tasks;
  for (const auto& [task, v] : records.front().targets) tasks.push_back(task);
  for (const MoleculeRecord& r : records) {
    if (r.targets.size() != tasks.size() ||
        !std::equal(tasks.begin(), tasks.end(), r.targets.begin(), [](const std::string& t, const auto& kv) { return t == kv.first; })) {
      throw Error(ErrorCode::TaskMismatch, "record " + r.id + " has a different task set");
    }
  }
  return tasks;
}

Eigen::RowVectorXd target_vector(const MoleculeRecord& record, const std::vector<std::string>& tasks) {
  Eigen::RowVectorXd y(static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    auto it = record.targets.find(tasks[t]);
    if (it == record.targets.end()) throw Error(ErrorCode::TaskMismatch, "record " + record.id + " lacks task " + tasks[t]);
    y(static_cast<Eigen::Index>(t)) = it->second;
  }
  return y;
}

Normalizer normalize_targets(const std::vector<MoleculeRecord>& records, const std::vector<std::size_t>& train_indices,
                             const std::vector<std::string>& tasks) {
  if (train_indices.empty()) throw Error(ErrorCode::NoData, "normalizer needs at least one training record");
  Normalizer norm;
  norm.tasks = tasks;
  const auto t = static_cast<Eigen::Index>(tasks.size());
  norm.mean.resize(t);
  norm.stddev.resize(t);
  std::vector<double> values(train_indices.size());
  for (Eigen::Index c = 0; c < t; ++c) {
    for (std::size_t i = 0; i < train_indices.size(); ++i) {
      values[i] = target_vector(records.at(train_indices[i]), tasks)(c);
    }
    const double n = static_cast<double>(values.size());
    const double mu = order_independent_sum(values) / n;
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - mu) * (values[i] - mu);
    const double sd = std::sqrt(order_independent_sum(sq) / n);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
      throw Error(ErrorCode::ConstantTarget, "task " + tasks[static_cast<std::size_t>(c)] + " is constant on the training split");
    }
    norm.mean(c) = mu;
    norm.stddev(c) = sd;
  }
  return norm;
}

void SplitSpec::validate() const {
  if (mode == SplitMode::kfold) {
    if (k_folds < 2) throw Error(ErrorCode::InvalidSplit, "kfold needs k >= 2");
    if (fold >= k_folds) throw Error(ErrorCode::InvalidSplit, "fold index outside [0, k)");
  } else if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidSplit, "holdout train_fraction must lie in (0, 1)");
  }
}

std::vector<Fold> split(std::size_t record_count, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> order(record_count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(spec.seed, {0x5b1d}));
  rng.shuffle(order);

  std::vector<Fold> folds;
  if (spec.mode == SplitMode::kfold) {
    if (spec.k_folds > record_count) {
      throw Error(ErrorCode::InvalidSplit, "k = " + std::to_string(spec.k_folds) + " exceeds " +
                                               std::to_string(record_count) + " records");
    }
    for (std::size_t f = 0; f < spec.k_folds; ++f) {
      const std::size_t begin = f * record_count / spec.k_folds;
      const std::size_t end = (f + 1) * record_count / spec.k_folds;
      Fold fold;
      for (std::size_t i = 0; i < record_count; ++i) {
        (i >= begin && i < end ? fold.test : fold.train).push_back(order[i]);
      }
      std::sort(fold.train.begin(), fold.train.end());
      std::sort(fold.test.begin(), fold.test.end());
      folds.push_back(std::move(fold));
    }
  } else {
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(record_count)));
    if (n_train == 0 || n_train >= record_count) {
      throw Error(ErrorCode::InvalidSplit, "holdout leaves an empty side with " + std::to_string(record_count) + " records");
    }
    Fold fold;
    fold.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    fold.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.test.begin(), fold.test.end());
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::vector<MoleculeRecord> synthetic_dataset(std::size_t count, std::uint64_t seed, const SyntheticOptions& options) {
  if (options.min_atoms < 2 || options.max_atoms < options.min_atoms || options.elements.empty()) {
    throw Error(ErrorCode::InvalidConfig, "invalid synthetic dataset options");
  }
  Rng rng(seed);
  std::vector<MoleculeRecord> records;
  const std::size_t width = std::to_string(count).size();
  for (std::size_t m = 0; m < count; ++m) {
    MoleculeRecord r;
    std::string number = std::to_string(m);
    r.id = "syn" + std::string(width - number.size(), '0') + number;
    const std::size_t n = options.min_atoms + static_cast<std::size_t>(rng.below(options.max_atoms - options.min_atoms + 1));
    const double s = options.min_scale + (options.max_scale - options.min_scale) * rng.uniform();
    const Eigen::RowVector3d axis_scale(1.0, 0.55 + 0.3 * rng.uniform(), 0.2 + 0.25 * rng.uniform());
    const Rotationd orientation = rotation_from_uniforms(rng.uniform(), rng.uniform(), rng.uniform());
    r.coords.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) r.coords(static_cast<Eigen::Index>(i), c) = s * axis_scale(c) * rng.normal();
      r.atomic_numbers.push_back(options.elements[static_cast<std::size_t>(rng.below(options.elements.size()))]);
    }
    r.coords = rotate(r.coords, orientation);
    r.targets["rg"] = radius_of_gyration(r.coords);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace rotenc
