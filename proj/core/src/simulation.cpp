#include "lattice/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "lattice/error.hpp"

namespace lattice {

namespace {

constexpr std::uint64_t kErrorStream = 0x5eed0000ULL;

}  // namespace

JointCdf error_cdf(const ErrorLaw& law) {
  if (const auto* g = std::get_if<GaussianErrors>(&law)) return gaussian_cdf(g->rho);
  return independent_cdf(std::get<IndependentErrors>(law).margins);
}

double error_margin_cdf(const ErrorLaw& law, std::size_t d, double e) {
  if (std::holds_alternative<GaussianErrors>(law)) return std_normal_cdf(e);
  const auto& m = std::get<IndependentErrors>(law).margins;
  if (d >= m.size()) throw UsageError("error law has no margin for dimension " + std::to_string(d + 1));
  if (e == kInf) return 1.0;
  if (e == -kInf) return 0.0;
  return law_cdf(m[d], e);
}

const RawVariable& DgpSpec::variable(std::string_view name) const {
  for (const auto& v : variables)
    if (v.name == name) return v;
  throw UsageError("unknown covariate '" + std::string(name) + "'");
}

int DgpSpec::usage_count(std::string_view name) const {
  int count = 0;
  for (const auto& r : regressors)
    if (std::find(r.begin(), r.end(), name) != r.end()) ++count;
  return count;
}

bool DgpSpec::is_exclusive(std::size_t d, std::size_t k) const {
  return usage_count(regressors.at(d).at(k)) == 1;
}

void DgpSpec::validate() const {
  const std::size_t D = dims();
  if (D < 2) throw UsageError("DGP needs at least two dimensions");
  if (lattice.dims() != D) throw UsageError("lattice and regressor lists disagree on the number of dimensions");
  if (model.dims() != D) throw UsageError("index model and regressor lists disagree on the number of dimensions");
  model.validate();
  for (std::size_t i = 0; i < variables.size(); ++i) {
    const auto& v = variables[i];
    if (v.name.empty()) throw UsageError("covariate with empty name");
    lattice::validate(v.law);
    for (std::size_t j = 0; j < i; ++j)
      if (variables[j].name == v.name) throw UsageError("duplicate covariate '" + v.name + "'");
    for (const auto& [src, coef] : v.linkage) {
      if (!std::isfinite(coef)) throw UsageError("non-finite linkage coefficient on '" + v.name + "'");
      bool earlier = false;
      for (std::size_t j = 0; j < i; ++j) earlier = earlier || variables[j].name == src;
      if (!earlier) throw UsageError("covariate '" + v.name + "' links to '" + src + "', which is not declared before it");
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    if (regressors[d].empty()) throw UsageError("dimension " + std::to_string(d + 1) + " has no regressors");
    if (static_cast<std::size_t>(model.beta[d].size()) != regressors[d].size())
      throw UsageError("dimension " + std::to_string(d + 1) + ": " + std::to_string(regressors[d].size()) +
                       " regressors but " + std::to_string(model.beta[d].size()) + " coefficients");
    for (const auto& name : regressors[d]) (void)variable(name);
  }
  if (const auto* g = std::get_if<GaussianErrors>(&errors)) {
    if (D != 2) throw UsageError("gaussian errors are implemented for two dimensions");
    (void)Correlation(g->rho);
  } else {
    const auto& m = std::get<IndependentErrors>(errors).margins;
    if (m.size() != D) throw UsageError("independent error law needs one margin per dimension");
    for (const auto& law : m) lattice::validate(law);
  }
}

Simulation generate_with_errors(const DgpSpec& spec, std::size_t n) {
  spec.validate();
  if (n == 0) throw UsageError("sample size must be at least 1");
  const std::size_t D = spec.dims();
  const auto rows = static_cast<Eigen::Index>(n);

  std::map<std::string, Eigen::VectorXd> columns;
  for (std::size_t v = 0; v < spec.variables.size(); ++v) {
    const auto& var = spec.variables[v];
    const auto draws = sample(var.law, n, derive_seed(spec.seed, v));
    Eigen::VectorXd col = Eigen::Map<const Eigen::VectorXd>(draws.data(), rows);
    for (const auto& [src, coef] : var.linkage) col += coef * columns.at(src);
    columns.emplace(var.name, std::move(col));
  }

  Simulation sim;
  sim.errors.resize(rows, static_cast<Eigen::Index>(D));
  if (const auto* g = std::get_if<GaussianErrors>(&spec.errors)) {
    Rng rng(derive_seed(spec.seed, kErrorStream));
    const double s = std::sqrt(1.0 - g->rho * g->rho);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double z1 = rng.normal();
      const double z2 = rng.normal();
      sim.errors(i, 0) = z1;
      sim.errors(i, 1) = g->rho * z1 + s * z2;
    }
  } else {
    const auto& margins = std::get<IndependentErrors>(spec.errors).margins;
    for (std::size_t d = 0; d < D; ++d) {
      const auto draws = sample(margins[d], n, derive_seed(spec.seed, kErrorStream + 1 + d));
      sim.errors.col(static_cast<Eigen::Index>(d)) = Eigen::Map<const Eigen::VectorXd>(draws.data(), rows);
    }
  }

  Dataset& data = sim.data;
  data.covariates.resize(D);
  data.names = spec.regressors;
  data.outcomes.resize(rows, static_cast<Eigen::Index>(D));
  for (std::size_t d = 0; d < D; ++d) {
    auto& X = data.covariates[d];
    X.resize(rows, static_cast<Eigen::Index>(spec.regressors[d].size()));
    for (std::size_t k = 0; k < spec.regressors[d].size(); ++k)
      X.col(static_cast<Eigen::Index>(k)) = columns.at(spec.regressors[d][k]);
  }
  std::vector<double> latent(D);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (std::size_t d = 0; d < D; ++d)
      latent[d] = data.covariates[d].row(i).dot(spec.model.beta[d]) + sim.errors(i, static_cast<Eigen::Index>(d));
    const CellIndex cell = categorize(latent, spec.lattice);
    for (std::size_t d = 0; d < D; ++d) data.outcomes(i, static_cast<Eigen::Index>(d)) = cell[d];
  }
  return sim;
}

Dataset generate(const DgpSpec& spec, std::size_t n) { return generate_with_errors(spec, n).data; }

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

DgpSpec semiparam(int which) {
  DgpSpec s;
  s.id = "semiparam-" + std::to_string(which);
  s.lattice = LatticeSpec({{-1.0, 1.0}, {-1.0, 1.0}});
  s.model.beta = {vec({1.0, 0.5}), vec({1.0, 0.5})};
  s.errors = GaussianErrors{0.6};
  const RawVariable common2{"x_common2", UniformLaw{-0.5, 0.5}, {}};
  switch (which) {
    case 1:
      s.variables = {{"x_common1", UniformLaw{-0.5, 0.5}, {}}, common2};
      break;
    case 2:
      s.variables = {{"x_common1", UniformLaw{-2.0, 2.0}, {}}, common2};
      break;
    case 3:
      s.variables = {{"x_common1", LaplaceLaw{0.0, 1.0}, {}}, common2};
      break;
    default:
      s.variables = {{"x_excl1", LaplaceLaw{0.0, 1.0}, {}}, {"x_excl2", LaplaceLaw{0.0, 1.0}, {}}, common2};
      s.regressors = {{"x_excl1", "x_common2"}, {"x_excl2", "x_common2"}};
      return s;
  }
  s.regressors = {{"x_common1", "x_common2"}, {"x_common1", "x_common2"}};
  return s;
}

DgpSpec twostep() {
  DgpSpec s;
  s.id = "twostep-5.1";
  s.lattice = LatticeSpec({{-1.0, 1.0}, {-0.8, 0.8}});
  s.variables = {{"x1", NormalLaw{0.0, 1.0}, {}}, {"x2", NormalLaw{0.0, 0.5}, {{"x1", 0.3}}}};
  s.regressors = {{"x1"}, {"x2"}};
  s.model.beta = {vec({0.8}), vec({-0.5})};
  s.errors = GaussianErrors{0.6};
  return s;
}

DgpSpec design(int which) {
  DgpSpec s;
  s.id = "param-design-" + std::to_string(which);
  switch (which) {
    case 1:
      s.lattice = LatticeSpec({{1.0}, {1.25}});
      s.variables = {{"x", UniformLaw{-4.0, 4.0}, {}}};
      s.regressors = {{"x"}, {"x"}};
      s.model.beta = {vec({3.0}), vec({2.5})};
      s.errors = GaussianErrors{0.33};
      break;
    case 2:
      s.lattice = LatticeSpec({{-1.5, 0.6, 4.0}, {-2.5, 2.0}});
      s.variables = {{"x", UniformLaw{-2.0, 2.0}, {}}, {"w1", DiscreteLaw{{-2.5, -1.5, -0.5, 0.5}, {}}, {}}};
      s.regressors = {{"x", "w1"}, {"x"}};
      s.model.beta = {vec({2.0, -3.0}), vec({3.0})};
      s.errors = GaussianErrors{0.25};
      break;
    default:
      s.lattice = LatticeSpec({{-7.0, -5.0, -0.75, 2.5, 4.0}, {-2.0}});
      s.variables = {{"x", UniformLaw{-2.0, 2.0}, {}},
                     {"w1", StudentTLaw{7.0}, {}},
                     {"w2", StudentTLaw{7.0}, {}},
                     {"z2", LogisticLaw{3.0, 2.0}, {}}};
      s.regressors = {{"x", "w1"}, {"x", "w2", "z2"}};
      s.model.beta = {vec({1.75, -2.75}), vec({2.5, -4.0, 2.0})};
      s.errors = GaussianErrors{0.5};
      break;
  }
  return s;
}

}  // namespace

std::vector<std::string> builtin_ids() {
  return {"semiparam-1", "semiparam-2",      "semiparam-3",      "semiparam-4",
          "twostep-5.1", "param-design-1", "param-design-2", "param-design-3"};
}

DgpSpec builtin_spec(std::string_view id, std::uint64_t seed) {
  DgpSpec s;
  if (id == "semiparam-1") s = semiparam(1);
  else if (id == "semiparam-2") s = semiparam(2);
  else if (id == "semiparam-3") s = semiparam(3);
  else if (id == "semiparam-4") s = semiparam(4);
  else if (id == "twostep-5.1") s = twostep();
  else if (id == "param-design-1") s = design(1);
  else if (id == "param-design-2") s = design(2);
  else if (id == "param-design-3") s = design(3);
  else {
    std::string known;
    for (const auto& k : builtin_ids()) known += (known.empty() ? "" : ", ") + k;
    throw UsageError("unknown DGP id '" + std::string(id) + "' (known: " + known + ")");
  }
  s.seed = seed;
  s.validate();
  return s;
}

std::pair<DgpSpec, Dataset> builtin_dgp(std::string_view id, std::size_t n, std::uint64_t seed) {
  DgpSpec s = builtin_spec(id, seed);
  Dataset d = generate(s, n);
  return {std::move(s), std::move(d)};
}

std::string dgp_to_json(const DgpSpec& spec) {
  using detail::json;
  json j;
  j["id"] = spec.id;
  j["seed"] = spec.seed;
  j["thresholds"] = spec.lattice.thresholds();
  json vars = json::array();
  for (const auto& v : spec.variables) {
    json jv{{"name", v.name}, {"law", detail::law_to_json(v.law)}};
    if (!v.linkage.empty()) {
      json link = json::object();
      for (const auto& [src, coef] : v.linkage) link[src] = coef;
      jv["linkage"] = link;
    }
    vars.push_back(jv);
  }
  j["covariates"] = vars;
  j["regressors"] = spec.regressors;
  j["beta"] = detail::index_model_to_json_value(spec.model)["beta"];
  if (const auto* g = std::get_if<GaussianErrors>(&spec.errors)) {
    j["errors"] = json{{"type", "gaussian"}, {"rho", g->rho}};
  } else {
    json m = json::array();
    for (const auto& law : std::get<IndependentErrors>(spec.errors).margins) m.push_back(detail::law_to_json(law));
    j["errors"] = json{{"type", "independent"}, {"margins", m}};
  }
  return j.dump(2);
}

DgpSpec dgp_from_json(std::string_view text) {
  using detail::get_field;
  using detail::json;
  const json j = detail::parse_json(text, "dgp config");
  DgpSpec s;
  s.id = j.value("id", std::string("custom"));
  s.seed = j.value("seed", std::uint64_t{0});
  s.lattice = LatticeSpec(get_field<std::vector<std::vector<double>>>(j, "thresholds", "dgp config"));
  if (!j.contains("covariates") || !j["covariates"].is_array()) throw UsageError("dgp config: missing 'covariates' array");
  for (const auto& jv : j["covariates"]) {
    RawVariable v;
    v.name = get_field<std::string>(jv, "name", "covariate");
    if (!jv.contains("law")) throw UsageError("covariate '" + v.name + "': missing 'law'");
    v.law = detail::law_from_json(jv["law"]);
    if (jv.contains("linkage"))
      for (const auto& [src, coef] : jv["linkage"].items()) v.linkage.emplace_back(src, coef.get<double>());
    s.variables.push_back(std::move(v));
  }
  s.regressors = get_field<std::vector<std::vector<std::string>>>(j, "regressors", "dgp config");
  s.model = detail::index_model_from_json_value(json{{"beta", j.contains("beta") ? j["beta"] : json()}});
  if (!j.contains("errors")) throw UsageError("dgp config: missing 'errors'");
  const json& e = j["errors"];
  const auto type = get_field<std::string>(e, "type", "errors");
  if (type == "gaussian") {
    s.errors = GaussianErrors{get_field<double>(e, "rho", "errors")};
  } else if (type == "independent") {
    IndependentErrors ie;
    if (!e.contains("margins")) throw UsageError("errors: missing 'margins'");
    for (const auto& m : e["margins"]) ie.margins.push_back(detail::law_from_json(m));
    s.errors = std::move(ie);
  } else {
    throw UsageError("errors: unknown type '" + type + "'");
  }
  s.validate();
  return s;
}

}  // namespace lattice
