#include "lattice/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "json_util.hpp"
#include "lattice/error.hpp"

namespace lattice {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("row " + std::to_string(row) + ", column '" + column + "': cannot parse '" + s + "' as a number");
  }
  return v;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  const std::size_t D = data.dims();
  for (std::size_t d = 0; d < D; ++d) {
    if (d > 0) out += ',';
    out += "y" + std::to_string(d + 1);
  }
  for (std::size_t d = 0; d < D; ++d) {
    for (Eigen::Index k = 0; k < data.covariates[d].cols(); ++k) {
      std::string name = (d < data.names.size() && static_cast<std::size_t>(k) < data.names[d].size())
                             ? data.names[d][static_cast<std::size_t>(k)]
                             : "c" + std::to_string(k + 1);
      out += ",x" + std::to_string(d + 1) + "_" + name;
    }
  }
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t d = 0; d < D; ++d) {
      if (d > 0) out += ',';
      out += std::to_string(data.outcomes(r, static_cast<Eigen::Index>(d)));
    }
    for (std::size_t d = 0; d < D; ++d)
      for (Eigen::Index k = 0; k < data.covariates[d].cols(); ++k) out += "," + format_double(data.covariates[d](r, k));
    out += '\n';
  }
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  write_text_file(path, dataset_to_csv(data));
}

Dataset dataset_from_csv(std::string_view text, std::string_view sidecar_json) {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) lines.push_back(cur);
  }
  while (!lines.empty() && lines.back().find_first_not_of(" \t\r") == std::string::npos) lines.pop_back();
  if (lines.empty()) throw DataError("dataset CSV is empty (header is mandatory)");

  const std::vector<std::string> header = split_csv_line(lines.front());
  std::map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) throw DataError("header column " + std::to_string(c + 1) + " is empty");
    if (!column_of.emplace(header[c], c).second) throw DataError("duplicate column '" + header[c] + "'");
  }

  std::size_t D = 0;
  while (column_of.count("y" + std::to_string(D + 1)) != 0) ++D;
  if (D < 2) throw DataError("dataset needs outcome columns y1, y2, ...; found " + std::to_string(D));

  std::vector<std::vector<std::size_t>> dim_columns(D);
  std::vector<std::vector<std::string>> dim_names(D);
  if (!sidecar_json.empty()) {
    const auto j = detail::parse_json(sidecar_json, "dataset sidecar");
    const auto dims = detail::get_field<std::vector<std::vector<std::string>>>(j, "dimensions", "dataset sidecar");
    if (dims.size() != D)
      throw DataError("sidecar lists " + std::to_string(dims.size()) + " dimensions but the CSV has " +
                      std::to_string(D) + " outcome columns");
    for (std::size_t d = 0; d < D; ++d) {
      for (const auto& name : dims[d]) {
        const auto it = column_of.find(name);
        if (it == column_of.end()) throw DataError("sidecar column '" + name + "' not present in CSV header");
        dim_columns[d].push_back(it->second);
        dim_names[d].push_back(name);
      }
    }
  } else {
    static const std::regex pattern(R"(x([0-9]+)_(.+))");
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& h = header[c];
      if (h.size() > 1 && h[0] == 'y' && std::all_of(h.begin() + 1, h.end(), ::isdigit)) {
        const auto d = static_cast<std::size_t>(std::stoul(h.substr(1)));
        if (d >= 1 && d <= D) continue;
      }
      std::smatch m;
      if (!std::regex_match(h, m, pattern))
        throw DataError("column '" + h + "' is neither an outcome (y<d>) nor a covariate (x<d>_<name>); "
                        "supply a sidecar mapping columns to dimensions");
      const auto d = static_cast<std::size_t>(std::stoul(m[1].str()));
      if (d < 1 || d > D)
        throw DataError("column '" + h + "' refers to dimension " + std::to_string(d) + " but the CSV has " +
                        std::to_string(D) + " outcome columns");
      dim_columns[d - 1].push_back(c);
      dim_names[d - 1].push_back(m[2].str());
    }
  }
  for (std::size_t d = 0; d < D; ++d)
    if (dim_columns[d].empty()) throw DataError("dimension " + std::to_string(d + 1) + " has no covariate columns");

  const std::size_t n = lines.size() - 1;
  if (n == 0) throw DataError("dataset CSV has a header but no rows");
  Dataset data;
  data.names = dim_names;
  data.outcomes.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D));
  data.covariates.resize(D);
  for (std::size_t d = 0; d < D; ++d)
    data.covariates[d].resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim_columns[d].size()));

  for (std::size_t i = 0; i < n; ++i) {
    const auto fields = split_csv_line(lines[i + 1]);
    const std::size_t row = i + 2;  // 1-based file line
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t d = 0; d < D; ++d) {
      const std::string col = "y" + std::to_string(d + 1);
      const double v = parse_number(fields[column_of.at(col)], row, col);
      if (v != std::floor(v) || v < 1)
        throw DataError("row " + std::to_string(row) + ", column '" + col + "': category must be a positive integer");
      data.outcomes(r, static_cast<Eigen::Index>(d)) = static_cast<int>(v);
    }
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t k = 0; k < dim_columns[d].size(); ++k) {
        const std::size_t c = dim_columns[d][k];
        const double v = parse_number(fields[c], row, header[c]);
        if (!std::isfinite(v)) throw DataError("row " + std::to_string(row) + ", column '" + header[c] + "': not finite");
        data.covariates[d](r, static_cast<Eigen::Index>(k)) = v;
      }
  }
  return data;
}

Dataset read_dataset_csv(const std::filesystem::path& path, const std::optional<std::filesystem::path>& sidecar) {
  const std::string text = read_text_file(path);
  const std::string side = sidecar ? read_text_file(*sidecar) : std::string();
  return dataset_from_csv(text, side);
}

namespace detail {

json lattice_to_json_value(const LatticeSpec& spec) { return json{{"thresholds", spec.thresholds()}}; }

LatticeSpec lattice_from_json_value(const json& j) {
  return LatticeSpec(get_field<std::vector<std::vector<double>>>(j, "thresholds", "lattice"));
}

json index_model_to_json_value(const IndexModel& model) {
  json b = json::array();
  for (const auto& v : model.beta) b.push_back(vector_to_json(v));
  return json{{"beta", b}};
}

IndexModel index_model_from_json_value(const json& j) {
  IndexModel m;
  for (const auto& v : get_field<std::vector<std::vector<double>>>(j, "beta", "index model"))
    m.beta.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  m.validate();
  return m;
}

json law_to_json(const Law& law) {
  json j;
  j["type"] = law_tag(law);
  if (const auto* u = std::get_if<UniformLaw>(&law)) {
    j["a"] = u->a;
    j["b"] = u->b;
  } else if (const auto* n = std::get_if<NormalLaw>(&law)) {
    j["mean"] = n->mean;
    j["sd"] = n->sd;
  } else if (const auto* l = std::get_if<LaplaceLaw>(&law)) {
    j["location"] = l->location;
    j["scale"] = l->scale;
  } else if (const auto* t = std::get_if<StudentTLaw>(&law)) {
    j["df"] = t->df;
  } else if (const auto* g = std::get_if<LogisticLaw>(&law)) {
    j["location"] = g->location;
    j["scale"] = g->scale;
  } else if (const auto* dl = std::get_if<DiscreteLaw>(&law)) {
    j["values"] = dl->values;
    if (!dl->weights.empty()) j["weights"] = dl->weights;
  }
  return j;
}

Law law_from_json(const json& j) {
  const auto type = get_field<std::string>(j, "type", "law");
  Law law;
  if (type == "uniform") {
    law = UniformLaw{get_field<double>(j, "a", "uniform law"), get_field<double>(j, "b", "uniform law")};
  } else if (type == "normal") {
    law = NormalLaw{j.value("mean", 0.0), j.value("sd", 1.0)};
  } else if (type == "laplace") {
    law = LaplaceLaw{j.value("location", 0.0), j.value("scale", 1.0)};
  } else if (type == "student_t") {
    law = StudentTLaw{get_field<double>(j, "df", "student_t law")};
  } else if (type == "logistic") {
    law = LogisticLaw{j.value("location", 0.0), j.value("scale", 1.0)};
  } else if (type == "discrete") {
    law = DiscreteLaw{get_field<std::vector<double>>(j, "values", "discrete law"),
                      j.value("weights", std::vector<double>{})};
  } else {
    throw UsageError("unknown law type '" + type + "'");
  }
  validate(law);
  return law;
}

}  // namespace detail

std::string lattice_to_json(const LatticeSpec& spec) { return detail::lattice_to_json_value(spec).dump(2); }

LatticeSpec lattice_from_json(std::string_view text) {
  return detail::lattice_from_json_value(detail::parse_json(text, "lattice"));
}

std::string index_model_to_json(const IndexModel& model) {
  return detail::index_model_to_json_value(model).dump(2);
}

IndexModel index_model_from_json(std::string_view text) {
  return detail::index_model_from_json_value(detail::parse_json(text, "index model"));
}

}  // namespace lattice
