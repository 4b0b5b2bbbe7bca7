#include "dcies/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dcies/synthetic.hpp"

namespace dcies::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string{} : c.substr(b, e - b + 1);
  }
  return cells;
}

double parse_double(const std::string& s, const fs::path& source, std::size_t row) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw IoError(source.string() + ": row " + std::to_string(row + 1) + ": not a number: '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (header) {
      t.header = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != t.header.size())
      throw IoError(path.string() + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                    std::to_string(cells.size()) + " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (header) throw IoError(path.string() + " is empty");
  return t;
}

Matrix numeric_matrix(const CsvTable& table, const fs::path& source) {
  Matrix m(static_cast<Index>(table.rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t c = 0; c < table.header.size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = parse_double(table.rows[r][c], source, r);
  return m;
}

std::vector<FactorSpec> factor_specs_from_json(const json& j) {
  if (!j.is_array()) throw IoError("factor spec must be a JSON array");
  std::vector<FactorSpec> specs;
  for (const auto& e : j) {
    FactorSpec s;
    s.name = e.at("name").get<std::string>();
    const auto kind = e.at("kind").get<std::string>();
    if (kind == "categorical") {
      s.kind = FactorKind::categorical;
      if (!e.contains("cardinality")) throw DatasetError("categorical factor '" + s.name + "' needs a cardinality");
      s.cardinality = e.at("cardinality").get<int>();
    } else if (kind == "continuous") {
      s.kind = FactorKind::continuous;
      if (e.contains("cardinality") && !e.at("cardinality").is_null())
        throw DatasetError("continuous factor '" + s.name + "' must not carry a cardinality");
    } else {
      throw DatasetError("unknown factor kind '" + kind + "'");
    }
    s.validate();
    specs.push_back(std::move(s));
  }
  return specs;
}

json factor_specs_to_json(const std::vector<FactorSpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) {
    json e{{"name", s.name}, {"kind", s.is_categorical() ? "categorical" : "continuous"}};
    if (s.cardinality) e["cardinality"] = *s.cardinality;
    arr.push_back(std::move(e));
  }
  return arr;
}

std::vector<FactorSpec> read_factor_specs(const fs::path& path) {
  try {
    return factor_specs_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace {

void write_matrix_csv(const fs::path& path, const Matrix& m, const std::vector<std::string>& header) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

}  // namespace

void write_codes(const fs::path& path, const Matrix& codes) {
  std::vector<std::string> header;
  for (Index c = 0; c < codes.cols(); ++c) header.push_back("c" + std::to_string(c));
  write_matrix_csv(path, codes, header);
}

void write_factors(const fs::path& path, const Matrix& factors, const std::vector<FactorSpec>& specs) {
  std::vector<std::string> header;
  for (const auto& s : specs) header.push_back(s.name);
  write_matrix_csv(path, factors, header);
}

void write_factor_specs(const fs::path& path, const std::vector<FactorSpec>& specs) {
  write_text(path, factor_specs_to_json(specs).dump(2) + "\n");
}

void write_split(const fs::path& path, const std::vector<Split>& split) {
  std::string out = "split\n";
  for (auto s : split) {
    out += to_string(s);
    out += '\n';
  }
  write_text(path, out);
}

DatasetFiles write_dataset(const fs::path& dir, const CodedDataset& data) {
  DatasetFiles f{dir / "codes.csv", dir / "factors.csv", dir / "factor_spec.json", dir / "split.csv"};
  write_codes(f.codes, data.codes());
  write_factors(f.factors, data.factors(), data.factor_specs());
  write_factor_specs(f.factor_spec, data.factor_specs());
  write_split(*f.split, data.split());
  return f;
}

CodedDataset load_dataset(const DatasetFiles& files, const SplitFallback& fallback) {
  const auto codes_table = read_csv(files.codes);
  for (std::size_t c = 0; c < codes_table.header.size(); ++c)
    if (codes_table.header[c] != "c" + std::to_string(c))
      throw IoError(files.codes.string() + ": expected header c0..c{L-1}");
  Matrix codes = numeric_matrix(codes_table, files.codes);

  const auto factors_table = read_csv(files.factors);
  Matrix factors = numeric_matrix(factors_table, files.factors);
  auto specs = read_factor_specs(files.factor_spec);
  if (specs.size() != factors_table.header.size())
    throw IoError(files.factor_spec.string() + ": spec count does not match factor columns");
  for (std::size_t j = 0; j < specs.size(); ++j)
    if (specs[j].name != factors_table.header[j])
      throw IoError(files.factors.string() + ": column '" + factors_table.header[j] +
                    "' does not match spec name '" + specs[j].name + "'");
  if (codes.rows() != factors.rows()) throw IoError("codes and factors files disagree on the number of rows");

  std::vector<Split> split;
  if (files.split && fs::exists(*files.split)) {
    const auto t = read_csv(*files.split);
    std::size_t col = t.header.size();
    for (std::size_t c = 0; c < t.header.size(); ++c)
      if (t.header[c] == "split") col = c;
    if (col == t.header.size()) throw IoError(files.split->string() + ": no 'split' column");
    for (const auto& r : t.rows) split.push_back(parse_split(r[col]));
    if (static_cast<Index>(split.size()) != codes.rows()) throw IoError("split file row count mismatch");
  } else {
    split = assign_splits(codes.rows(), fallback.train, fallback.validation, fallback.seed);
  }
  return CodedDataset(std::move(codes), std::move(factors), std::move(specs), std::move(split));
}

void write_importance(const fs::path& csv_path, const ImportanceMatrix& R, const json& sidecar) {
  std::vector<std::string> header;
  for (Index j = 0; j < R.values.cols(); ++j) header.push_back("z" + std::to_string(j));
  write_matrix_csv(csv_path, R.values, header);
  json side = sidecar;
  side["probe_tag"] = R.probe_tag;
  side["rows"] = R.values.rows();
  side["cols"] = R.values.cols();
  fs::path json_path = csv_path;
  json_path.replace_extension(".json");
  write_text(json_path, side.dump(2) + "\n");
}

ImportanceMatrix read_importance(const fs::path& csv_path) {
  const auto t = read_csv(csv_path);
  fs::path json_path = csv_path;
  json_path.replace_extension(".json");
  std::string tag;
  if (fs::exists(json_path)) tag = json::parse(read_text(json_path)).value("probe_tag", "");
  return validate_importance(numeric_matrix(t, csv_path), tag);
}

}  // namespace dcies::io
