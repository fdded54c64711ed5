#include "ppos/api.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>

#include "ppos/betabinom.hpp"
#include "ppos/endpoints.hpp"
#include "ppos/mcval.hpp"

#ifndef PPOS_VERSION
#define PPOS_VERSION "0.0.0"
#endif

namespace ppos::api {

namespace {

using endpoints::AllocationRatio;
using endpoints::EndpointSpec;
using endpoints::NaturalPrior;
using endpoints::SuccessRule;

[[noreturn]] void schema(const std::string& message) { fail(ErrorCode::schema, message); }

// ---------------------------------------------------------------------------
// Key tables

std::vector<KeySpec> merge(std::initializer_list<std::vector<KeySpec>> parts) {
  std::vector<KeySpec> out;
  std::set<std::string> seen;
  for (const auto& part : parts) {
    for (const KeySpec& k : part) {
      if (seen.insert(k.name).second) out.push_back(k);
    }
  }
  return out;
}

const std::vector<KeySpec> kCellKeys = {
    {"type", KeyType::string, "endpoint: cont | bin | surv"},
    {"nsamples", KeyType::integer, "1 (single arm) or 2 (two arms), default 2"},
    {"null-value", KeyType::number, "null mean/proportion/median, difference or hazard ratio"},
    {"alternative", KeyType::string, "greater | less, default greater"},
    {"succ-crit", KeyType::string, "trial | clinical, default trial"},
    {"Z-crit-final", KeyType::number, "final critical value c(1), default 1.96"},
    {"clin-succ-threshold", KeyType::number, "clinically meaningful effect (natural scale)"},
    {"a", KeyType::number, "allocation ratio a:1, default 1"},
};

const std::vector<KeySpec> kInterimKeys = {
    {"N", KeyType::integer, "planned subjects"},
    {"n", KeyType::integer, "interim subjects"},
    {"D", KeyType::integer, "planned events"},
    {"d", KeyType::integer, "interim events"},
    {"meandiff-ia", KeyType::number, "interim mean difference"},
    {"mean-ia", KeyType::number, "interim mean (single arm)"},
    {"sd-ia", KeyType::number, "interim (pooled) SD"},
    {"propdiff-ia", KeyType::number, "interim difference in proportions"},
    {"stderr-ia", KeyType::number, "SE of the interim difference in proportions"},
    {"prop-ia", KeyType::number, "interim proportion (single arm)"},
    {"prop-ia-trt", KeyType::number, "interim treatment proportion"},
    {"n-ia-trt", KeyType::integer, "interim treatment subjects"},
    {"prop-ia-con", KeyType::number, "interim control proportion"},
    {"n-ia-con", KeyType::integer, "interim control subjects"},
    {"hr-ia", KeyType::number, "interim hazard ratio"},
    {"median-ia", KeyType::number, "interim median (single arm)"},
    {"xi", KeyType::number, "variance factor xi of log median"},
    {"xi-estimator", KeyType::string, "mle | median | weibull-median"},
    {"weibull-shape", KeyType::number, "Weibull shape for xi-estimator=weibull-median"},
};

const std::vector<KeySpec> kProjectedKeys = {
    {"meandiff-exp", KeyType::number, "projected mean difference for the remaining data"},
    {"mean-exp", KeyType::number, "projected mean (single arm)"},
    {"propdiff-exp", KeyType::number, "projected difference in proportions"},
    {"prop-exp", KeyType::number, "projected proportion (single arm)"},
    {"hr-exp", KeyType::number, "projected hazard ratio"},
    {"median-exp", KeyType::number, "projected median (single arm)"},
};

const std::vector<KeySpec> kPriorKeys = {
    {"meandiff-prior", KeyType::number, "prior mean of the mean difference"},
    {"mean-prior", KeyType::number, "prior mean (single arm)"},
    {"propdiff-prior", KeyType::number, "prior mean of the difference in proportions"},
    {"prop-prior", KeyType::number, "prior mean proportion (single arm)"},
    {"hr-prior", KeyType::number, "prior hazard ratio"},
    {"median-prior", KeyType::number, "prior median (single arm)"},
    {"sd-prior", KeyType::number, "prior SD (log scale for survival)"},
    {"D-prior", KeyType::number, "events behind the survival prior; SD = r/sqrt(D-prior)"},
};

const std::vector<KeySpec> kDesignKeys = {
    {"N", KeyType::integer, "planned subjects"},
    {"D", KeyType::integer, "planned events"},
    {"se-exp", KeyType::number, "projected final SE k"},
    {"sd-exp", KeyType::number, "projected SD"},
    {"pi-exp", KeyType::number, "projected proportion (single arm)"},
    {"pi-exp-trt", KeyType::number, "projected treatment proportion"},
    {"pi-exp-con", KeyType::number, "projected control proportion"},
    {"xi", KeyType::number, "variance factor xi of log median"},
    {"xi-estimator", KeyType::string, "mle | median | weibull-median"},
    {"weibull-shape", KeyType::number, "Weibull shape for xi-estimator=weibull-median"},
};

const std::vector<KeySpec> kCurveKeys = {
    {"grid", KeyType::number_list, "interim estimates to evaluate (natural scale)"},
    {"grid-from", KeyType::number, "grid start"},
    {"grid-to", KeyType::number, "grid end"},
    {"grid-points", KeyType::integer, "grid size, default 101"},
    {"density-points", KeyType::integer, "density table size, default 2001"},
};

const std::vector<KeySpec> kBetabinomKeys = {
    {"nsamples", KeyType::integer, "1 or 2, default 2"},
    {"alternative", KeyType::string, "greater | less, default greater"},
    {"N", KeyType::integer, "final subjects (single arm)"},
    {"n", KeyType::integer, "interim subjects (single arm)"},
    {"x", KeyType::integer, "interim responders (single arm)"},
    {"N-trt", KeyType::integer, "final treatment subjects"},
    {"N-con", KeyType::integer, "final control subjects"},
    {"n-trt", KeyType::integer, "interim treatment subjects"},
    {"x-trt", KeyType::integer, "interim treatment responders"},
    {"n-con", KeyType::integer, "interim control subjects"},
    {"x-con", KeyType::integer, "interim control responders"},
    {"a-trt", KeyType::number, "beta prior a (treatment or single arm), default 1"},
    {"b-trt", KeyType::number, "beta prior b (treatment or single arm), default 1"},
    {"a-con", KeyType::number, "beta prior a (control), default 1"},
    {"b-con", KeyType::number, "beta prior b (control), default 1"},
    {"test", KeyType::string, "z | fisher (two arms) | exact (single arm), default z"},
    {"succ-crit", KeyType::string, "trial | clinical, default trial"},
    {"Z-crit-final", KeyType::number, "final critical value, default 1.96"},
    {"clin-succ-threshold", KeyType::number, "threshold for the final proportion or difference"},
    {"null-value", KeyType::number, "null proportion p0 (single arm) or difference (z test)"},
    {"z-se", KeyType::string, "unpooled | pooled, default unpooled"},
    {"continuity", KeyType::boolean, "Yates continuity correction in the z test, default true"},
};

const std::vector<KeySpec> kMcSeKeys = {
    {"D", KeyType::integer_list, "target events, default 20,30,40,50,60"},
    {"N", KeyType::integer_list, "subjects, paired with D"},
    {"inflation", KeyType::number_list, "N/D ratios, default 1,1.3,1.5"},
    {"med", KeyType::number, "true median, default 12"},
    {"ltfu-rate", KeyType::number, "loss to follow-up fraction, default 0.000005"},
    {"M", KeyType::integer, "replicates, default 5000"},
    {"seed", KeyType::integer, "RNG seed, default 20240101"},
};

const std::vector<KeySpec> kMcKeys = {
    {"engine", KeyType::string, "normal | betabinom, default normal"},
    {"sims", KeyType::integer, "simulated trials, default 200000"},
    {"seed", KeyType::integer, "RNG seed, default 1"},
};

const std::map<std::string, std::vector<KeySpec>, std::less<>>& key_tables() {
  static const std::map<std::string, std::vector<KeySpec>, std::less<>> tables = {
      {"pos", merge({kCellKeys, kDesignKeys, kPriorKeys})},
      {"succ-ia", merge({kCellKeys, kInterimKeys, kProjectedKeys, kPriorKeys})},
      {"betabinom", kBetabinomKeys},
      {"curves", merge({kCellKeys, kInterimKeys, kPriorKeys, kCurveKeys})},
      {"mc-se", kMcSeKeys},
      {"mc-ppos", merge({kMcKeys, kCellKeys, kInterimKeys, kProjectedKeys, kPriorKeys, kBetabinomKeys})},
  };
  return tables;
}

// ---------------------------------------------------------------------------
// Request reader: typed access plus tracking of consumed keys.

class Request {
 public:
  Request(const Json& body, std::string_view command) : body_(body) {
    if (!body_.is_object()) schema("request body must be a JSON object");
    const auto& table = keys_for(command);
    for (const auto& [key, value] : body_.items()) {
      if (key == "v") {
        if (!value.is_number_integer() || value.get<std::int64_t>() != kSchemaVersion) {
          schema("unsupported schema version \"v\" (expected " + std::to_string(kSchemaVersion) + ")");
        }
        continue;
      }
      const auto it = std::find_if(table.begin(), table.end(), [&](const KeySpec& k) { return k.name == key; });
      if (it == table.end()) schema("unknown key '" + key + "' for " + std::string(command));
    }
  }

  bool has(const std::string& key) const { return body_.contains(key) && key != "v"; }

  double number(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_number()) schema("key '" + key + "' must be a number");
    return v.get<double>();
  }

  std::optional<double> opt_number(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return number(key);
  }

  double number_or(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  std::int64_t integer(const std::string& key) {
    const Json& v = get(key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    schema("key '" + key + "' must be an integer");
  }

  int int32(const std::string& key) {
    const std::int64_t v = integer(key);
    if (v < -2147483647 || v > 2147483647) schema("key '" + key + "' is out of range");
    return static_cast<int>(v);
  }

  int int32_or(const std::string& key, int fallback) { return has(key) ? int32(key) : fallback; }

  std::uint64_t seed_or(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const Json& v = get(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    const std::int64_t s = integer(key);
    if (s < 0) schema("key '" + key + "' must be a nonnegative integer");
    return static_cast<std::uint64_t>(s);
  }

  bool boolean_or(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = get(key);
    if (!v.is_boolean()) schema("key '" + key + "' must be true or false");
    return v.get<bool>();
  }

  std::string choice(const std::string& key, std::initializer_list<std::string_view> allowed,
                     std::optional<std::string_view> fallback) {
    if (!has(key)) {
      if (!fallback) schema("missing required key '" + key + "'");
      return std::string(*fallback);
    }
    const Json& v = get(key);
    if (!v.is_string()) schema("key '" + key + "' must be a string");
    const auto s = v.get<std::string>();
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (auto a : allowed) list += (list.empty() ? "" : " | ") + std::string(a);
      schema("key '" + key + "' must be one of: " + list);
    }
    return s;
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_array()) schema("key '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const Json& e : v) {
      if (!e.is_number()) schema("key '" + key + "' must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<int> integers(const std::string& key) {
    std::vector<int> out;
    for (double d : numbers(key)) {
      if (std::floor(d) != d || std::fabs(d) > 2147483647.0) schema("key '" + key + "' must hold integers");
      out.push_back(static_cast<int>(d));
    }
    return out;
  }

  void require(const std::string& key, const std::string& context) const {
    if (!has(key)) schema("missing required key '" + key + "' for " + context);
  }

  // Every supplied key must have been read.
  void finish(const std::string& context) const {
    for (const auto& [key, value] : body_.items()) {
      if (key != "v" && !used_.count(key)) schema("key '" + key + "' does not apply to " + context);
    }
  }

  Json echo() const {
    Json out = body_;
    out.erase("v");
    return out;
  }

 private:
  const Json& get(const std::string& key) {
    if (!body_.contains(key)) schema("missing required key '" + key + "'");
    used_.insert(key);
    return body_.at(key);
  }

  const Json& body_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Endpoint setup shared by succ-ia, curves and mc-ppos.

struct Cell {
  std::string type;
  int nsamples = 2;
  std::string label;
};

Cell read_cell(Request& r) {
  Cell c;
  c.type = r.choice("type", {"cont", "bin", "surv"}, std::nullopt);
  c.nsamples = r.int32_or("nsamples", 2);
  if (c.nsamples != 1 && c.nsamples != 2) schema("key 'nsamples' must be 1 or 2");
  c.label = "type=" + c.type + " nsamples=" + std::to_string(c.nsamples);
  return c;
}

Alternative read_alternative(Request& r) {
  return parse_alternative(r.choice("alternative", {"greater", "less"}, "greater"));
}

double read_null(Request& r, const Cell& c) {
  if (c.nsamples == 1) {
    r.require("null-value", c.label);
    return r.number("null-value");
  }
  return r.number_or("null-value", c.type == "surv" ? 1.0 : 0.0);
}

SuccessRule read_rule(Request& r) {
  SuccessRule rule;
  const std::string crit = r.choice("succ-crit", {"trial", "clinical"}, "trial");
  if (crit == "trial") {
    if (r.has("clin-succ-threshold")) schema("key 'clin-succ-threshold' requires succ-crit=clinical");
    rule.kind = core::SuccessKind::trial;
    rule.z_crit_final = r.number_or("Z-crit-final", 1.96);
  } else {
    if (r.has("Z-crit-final")) schema("key 'Z-crit-final' does not apply to succ-crit=clinical");
    r.require("clin-succ-threshold", "succ-crit=clinical");
    rule.kind = core::SuccessKind::clinical;
    rule.clin_threshold = r.number("clin-succ-threshold");
  }
  return rule;
}

AllocationRatio read_alloc(Request& r, const Cell& c) {
  if (c.nsamples == 1) return AllocationRatio::single_arm();
  return AllocationRatio::ratio(r.number_or("a", 1.0));
}

double read_xi(Request& r) {
  if (r.has("xi") && r.has("xi-estimator")) schema("keys 'xi' and 'xi-estimator' are mutually exclusive");
  if (r.has("xi")) return endpoints::xi_factor({endpoints::XiEstimator::Kind::custom, r.number("xi")});
  const std::string est = r.choice("xi-estimator", {"mle", "median", "weibull-median"}, "mle");
  if (est == "weibull-median") {
    r.require("weibull-shape", "xi-estimator=weibull-median");
    return endpoints::xi_factor({endpoints::XiEstimator::Kind::sample_median_weibull, r.number("weibull-shape")});
  }
  if (r.has("weibull-shape")) schema("key 'weibull-shape' requires xi-estimator=weibull-median");
  return endpoints::xi_factor({est == "mle" ? endpoints::XiEstimator::Kind::mle_exponential
                                            : endpoints::XiEstimator::Kind::sample_median_exponential,
                               1.0});
}

const char* prior_key(const Cell& c) {
  if (c.type == "cont") return c.nsamples == 2 ? "meandiff-prior" : "mean-prior";
  if (c.type == "bin") return c.nsamples == 2 ? "propdiff-prior" : "prop-prior";
  return c.nsamples == 2 ? "hr-prior" : "median-prior";
}

const char* projected_key(const Cell& c) {
  if (c.type == "cont") return c.nsamples == 2 ? "meandiff-exp" : "mean-exp";
  if (c.type == "bin") return c.nsamples == 2 ? "propdiff-exp" : "prop-exp";
  return c.nsamples == 2 ? "hr-exp" : "median-exp";
}

// `events_sd` converts D-prior to a prior SD; empty for non-survival cells.
std::optional<NaturalPrior> read_prior(Request& r, const Cell& c, bool required,
                                       const std::function<double(double)>& events_sd) {
  const std::string mean_key = prior_key(c);
  const bool has_mean = r.has(mean_key);
  const bool has_sd = r.has("sd-prior");
  const bool has_events = r.has("D-prior");
  if (!has_mean) {
    if (required) schema("missing required key '" + mean_key + "' for " + c.label);
    if (has_sd || has_events) schema("prior SD given without '" + mean_key + "'");
    return std::nullopt;
  }
  if (has_sd && has_events) schema("keys 'sd-prior' and 'D-prior' are mutually exclusive");
  NaturalPrior prior;
  prior.mean = r.number(mean_key);
  if (has_events) {
    if (c.type != "surv") schema("key 'D-prior' applies to survival endpoints only");
    prior.sd = events_sd(r.number("D-prior"));
  } else {
    r.require("sd-prior", c.label);
    prior.sd = r.number("sd-prior");
  }
  return prior;
}

struct NormalSetup {
  Cell cell;
  EndpointSpec spec;
  Alternative alt = Alternative::greater;
  SuccessRule rule;
  std::optional<NaturalPrior> prior;
  std::optional<double> projected;
};

NormalSetup read_interim(Request& r, bool with_projection) {
  NormalSetup s;
  s.cell = read_cell(r);
  const Cell& c = s.cell;
  s.alt = read_alternative(r);
  s.rule = read_rule(r);
  const double null_value = read_null(r, c);
  const AllocationRatio alloc = read_alloc(r, c);
  const auto need = [&](const char* key) { r.require(key, c.label); };

  std::function<double(double)> events_sd;
  if (c.type == "cont" && c.nsamples == 2) {
    for (auto k : {"N", "n", "meandiff-ia", "sd-ia"}) need(k);
    s.spec = endpoints::ContinuousTwoArm{null_value, r.number("meandiff-ia"), r.number("sd-ia"),
                                         r.int32("n"), r.int32("N"), alloc};
  } else if (c.type == "cont") {
    for (auto k : {"N", "n", "mean-ia", "sd-ia"}) need(k);
    s.spec = endpoints::ContinuousOneArm{null_value, r.number("mean-ia"), r.number("sd-ia"), r.int32("n"),
                                         r.int32("N")};
  } else if (c.type == "bin" && c.nsamples == 2) {
    need("N");
    if (r.has("prop-ia-trt") || r.has("prop-ia-con")) {
      for (auto k : {"prop-ia-trt", "n-ia-trt", "prop-ia-con", "n-ia-con"}) need(k);
      for (auto k : {"propdiff-ia", "stderr-ia", "n"}) {
        if (r.has(k)) schema(std::string("key '") + k + "' conflicts with arm-level interim counts");
      }
      s.spec = endpoints::BinaryTwoArm::from_counts(
          null_value, {r.number("prop-ia-trt"), r.int32("n-ia-trt")},
          {r.number("prop-ia-con"), r.int32("n-ia-con")}, r.int32("N"), alloc);
    } else {
      for (auto k : {"n", "propdiff-ia", "stderr-ia"}) need(k);
      s.spec = endpoints::BinaryTwoArm::from_estimate(null_value, r.number("propdiff-ia"), r.number("stderr-ia"),
                                                      r.int32("n"), r.int32("N"), alloc);
    }
  } else if (c.type == "bin") {
    for (auto k : {"N", "n", "prop-ia"}) need(k);
    s.spec = endpoints::BinaryOneArm{null_value, r.number("prop-ia"), r.int32("n"), r.int32("N")};
  } else if (c.nsamples == 2) {
    for (auto k : {"D", "d", "hr-ia"}) need(k);
    s.spec = endpoints::SurvivalTwoArm{null_value, r.number("hr-ia"), r.int32("d"), r.int32("D"), alloc};
    events_sd = [alloc](double e) { return endpoints::prior_sd_from_events(e, alloc); };
  } else {
    for (auto k : {"D", "d", "median-ia"}) need(k);
    const double xi = read_xi(r);
    s.spec = endpoints::SurvivalOneArm{null_value, r.number("median-ia"), r.int32("d"), r.int32("D"), xi};
    events_sd = [xi](double e) {
      require_domain(e > 0.0, "prior events must be positive");
      return xi / std::sqrt(e);
    };
  }
  s.prior = read_prior(r, c, false, events_sd);
  if (with_projection) s.projected = r.opt_number(projected_key(c));
  return s;
}

// ---------------------------------------------------------------------------
// Output helpers

Json envelope(std::string_view command, const Request& r, Json result, Json internals, Json warnings) {
  Json out;
  out["v"] = kSchemaVersion;
  out["command"] = command;
  out["inputs"] = r.echo();
  out["result"] = std::move(result);
  out["internals"] = std::move(internals);
  out["warnings"] = warnings.is_null() ? Json::array() : std::move(warnings);
  return out;
}

Json interim_internals(const endpoints::ResultBundle& b) {
  Json j;
  j["theta_hat"] = b.interim.theta_hat();
  j["k"] = b.interim.k();
  j["t"] = b.interim.t();
  j["z"] = b.interim.z();
  j["gamma"] = b.gamma.value;
  if (b.theta_prime) j["theta_prime"] = *b.theta_prime;
  if (b.prior) {
    j["theta0"] = b.prior->theta0;
    j["sigma0"] = b.prior->sigma0;
  }
  if (b.psi) j["psi"] = *b.psi;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

Json run_pos(Request& r) {
  const Cell c = read_cell(r);
  endpoints::DesignSpec design;
  design.alternative = read_alternative(r);
  design.rule = read_rule(r);
  design.null_value = read_null(r, c);
  design.alloc = read_alloc(r, c);
  const bool survival = c.type == "surv";
  const std::string size_key = survival ? "D" : "N";
  r.require(size_key, c.label);
  design.size = r.int32(size_key);

  using endpoints::EndpointKind;
  if (c.type == "cont") {
    design.kind = c.nsamples == 2 ? EndpointKind::continuous_two_arm : EndpointKind::continuous_one_arm;
  } else if (c.type == "bin") {
    design.kind = c.nsamples == 2 ? EndpointKind::binary_two_arm : EndpointKind::binary_one_arm;
  } else {
    design.kind = c.nsamples == 2 ? EndpointKind::survival_two_arm : EndpointKind::survival_one_arm;
  }

  const auto exclusive = [&](std::initializer_list<const char*> keys) {
    int count = 0;
    for (auto k : keys) count += r.has(k) ? 1 : 0;
    if (count > 1) {
      std::string list;
      for (auto k : keys) list += (list.empty() ? "'" : ", '") + std::string(k) + "'";
      schema("keys " + list + " are mutually exclusive");
    }
  };

  double xi = 1.0;
  if (r.has("se-exp")) {
    exclusive({"se-exp", "sd-exp", "pi-exp", "pi-exp-trt"});
    exclusive({"se-exp", "xi", "xi-estimator"});
    design.nuisance = endpoints::ProjectedSe{r.number("se-exp")};
  } else if (c.type == "cont") {
    r.require("sd-exp", c.label + " (or se-exp)");
    design.nuisance = endpoints::ProjectedSd{r.number("sd-exp")};
  } else if (c.type == "bin" && c.nsamples == 2) {
    r.require("pi-exp-trt", c.label + " (or se-exp)");
    r.require("pi-exp-con", c.label + " (or se-exp)");
    design.nuisance = endpoints::ProjectedProportions{r.number("pi-exp-trt"), r.number("pi-exp-con")};
  } else if (c.type == "bin") {
    r.require("pi-exp", c.label + " (or se-exp)");
    design.nuisance = endpoints::ProjectedProportion{r.number("pi-exp")};
  } else if (c.nsamples == 2) {
    design.nuisance = endpoints::NoNuisance{};
  } else {
    xi = read_xi(r);
    design.nuisance = endpoints::ProjectedXi{xi};
  }

  std::function<double(double)> events_sd;
  if (survival && c.nsamples == 2) {
    events_sd = [alloc = design.alloc](double e) { return endpoints::prior_sd_from_events(e, alloc); };
  } else if (survival) {
    events_sd = [xi](double e) {
      require_domain(e > 0.0, "prior events must be positive");
      return xi / std::sqrt(e);
    };
  }
  design.prior = *read_prior(r, c, true, events_sd);
  r.finish(c.label);

  const endpoints::DesignResult res = endpoints::design_pos(design);
  Json result{{"pos", res.pos.value()}};
  Json internals{{"k_tilde", res.k_tilde},
                 {"gamma", res.gamma.value},
                 {"theta0", res.prior.theta0},
                 {"sigma0", res.prior.sigma0}};
  return envelope("pos", r, std::move(result), std::move(internals), nullptr);
}

Json run_final(const Request& r, const NormalSetup& s) {
  const endpoints::FinalOutcome f = endpoints::final_outcome(s.spec, s.alt, s.rule);
  if (s.projected) endpoints::theta_prime(s.spec, *s.projected, s.alt);
  const double v = f.success ? 1.0 : 0.0;
  Json result{{"cp_trend", v}, {"ppos_no_prior", v}, {"final_success", f.success}};
  if (s.projected) result["cp_specified"] = v;
  if (s.prior) result["ppos_with_prior"] = v;
  Json internals{{"theta_hat", f.theta_hat}, {"k", f.k}, {"t", 1.0}, {"z", f.theta_hat / f.k},
                 {"gamma", f.gamma.value}};
  Json warnings = Json::array({"interim size equals the planned size; every measure is the success "
                               "indicator of the final data"});
  return envelope("succ-ia", r, std::move(result), std::move(internals), std::move(warnings));
}

Json run_succ_ia(Request& r, const RunOptions& options) {
  const NormalSetup s = read_interim(r, true);
  r.finish(s.cell.label);
  if (options.allow_final_analysis && endpoints::is_complete(s.spec)) return run_final(r, s);
  const endpoints::ResultBundle b = endpoints::evaluate(s.spec, s.alt, s.rule, s.prior, s.projected);
  Json result{{"cp_trend", b.cp_trend.value()}, {"ppos_no_prior", b.ppos_no_prior.value()}};
  if (b.cp_specified) result["cp_specified"] = b.cp_specified->value();
  if (b.ppos_with_prior) result["ppos_with_prior"] = b.ppos_with_prior->value();
  return envelope("succ-ia", r, std::move(result), interim_internals(b), nullptr);
}

struct BetabinomSetup {
  int nsamples = 2;
  betabinom::BetaPrior prior_t;
  betabinom::BetaPrior prior_c;
  betabinom::ArmInterim arm_t;
  betabinom::ArmInterim arm_c;
  betabinom::SuccessIndicator indicator;
};

BetabinomSetup read_betabinom(Request& r) {
  BetabinomSetup s;
  s.nsamples = r.int32_or("nsamples", 2);
  if (s.nsamples != 1 && s.nsamples != 2) schema("key 'nsamples' must be 1 or 2");
  const std::string label = "betabinom nsamples=" + std::to_string(s.nsamples);
  const Alternative alt = read_alternative(r);
  const auto need = [&](const char* key) { r.require(key, label); };

  s.prior_t = {r.number_or("a-trt", 1.0), r.number_or("b-trt", 1.0)};
  if (s.nsamples == 2) {
    for (auto k : {"N-trt", "N-con", "n-trt", "x-trt", "n-con", "x-con"}) need(k);
    s.arm_t = {r.int32("n-trt"), r.int32("x-trt"), r.int32("N-trt")};
    s.arm_c = {r.int32("n-con"), r.int32("x-con"), r.int32("N-con")};
    s.prior_c = {r.number_or("a-con", 1.0), r.number_or("b-con", 1.0)};
  } else {
    for (auto k : {"N", "n", "x"}) need(k);
    s.arm_t = {r.int32("n"), r.int32("x"), r.int32("N")};
  }

  const std::string crit = r.choice("succ-crit", {"trial", "clinical"}, "trial");
  if (crit == "clinical") {
    for (auto k : {"test", "z-se", "continuity", "Z-crit-final", "null-value"}) {
      if (r.has(k)) schema(std::string("key '") + k + "' does not apply to succ-crit=clinical");
    }
    need("clin-succ-threshold");
    s.indicator = betabinom::ClinicalThreshold{r.number("clin-succ-threshold"), alt};
    return s;
  }
  if (r.has("clin-succ-threshold")) schema("key 'clin-succ-threshold' requires succ-crit=clinical");
  const double z_crit = r.number_or("Z-crit-final", 1.96);
  const std::string test = s.nsamples == 2 ? r.choice("test", {"z", "fisher"}, "z")
                                           : r.choice("test", {"z", "exact"}, "z");
  if (test == "z") {
    betabinom::ZTest z;
    z.z_crit = z_crit;
    z.tail = alt;
    z.pooled = r.choice("z-se", {"unpooled", "pooled"}, "unpooled") == "pooled";
    z.continuity = r.boolean_or("continuity", true);
    if (s.nsamples == 1) need("null-value");
    z.null_value = r.number_or("null-value", 0.0);
    s.indicator = z;
    return s;
  }
  for (auto k : {"z-se", "continuity"}) {
    if (r.has(k)) schema(std::string("key '") + k + "' applies to test=z only");
  }
  const double level = 1.0 - numerics::std_normal_cdf(z_crit).value();
  if (test == "fisher") {
    if (r.has("null-value") && r.number("null-value") != 0.0) {
      schema("Fisher's exact test has a zero null difference");
    }
    s.indicator = betabinom::FisherExact{level, alt};
  } else {
    need("null-value");
    s.indicator = betabinom::ExactBinomial{level, r.number("null-value"), alt};
  }
  return s;
}

std::int64_t cell_count(const BetabinomSetup& s) {
  s.arm_t.validate();
  if (s.nsamples == 1) return s.arm_t.remaining() + 1;
  s.arm_c.validate();
  return betabinom::two_arm_cells(s.arm_t, s.arm_c);
}

void check_cap(const BetabinomSetup& s, const RunOptions& options) {
  const std::int64_t cells = cell_count(s);
  if (options.betabinom_cap > 0 && cells > options.betabinom_cap) {
    fail(ErrorCode::size_cap, "betabinom needs " + std::to_string(cells) +
                                  " indicator evaluations, above the configured cap of " +
                                  std::to_string(options.betabinom_cap));
  }
}

betabinom::PposResult exact_betabinom(const BetabinomSetup& s, const RunOptions& options) {
  if (s.nsamples == 1) return betabinom::ppos_one_arm(s.prior_t, s.arm_t, s.indicator);
  return betabinom::ppos_two_arm(s.prior_t, s.prior_c, s.arm_t, s.arm_c, s.indicator, options.threads);
}

Json betabinom_internals(const BetabinomSetup& s, const betabinom::PposResult& res) {
  Json j;
  j["indicator"] = betabinom::describe(s.indicator);
  j["cells"] = res.cells;
  j["fallbacks"] = res.fallbacks;
  const betabinom::BetaPrior post_t = betabinom::posterior_beta(s.prior_t, s.arm_t);
  if (s.nsamples == 2) {
    const betabinom::BetaPrior post_c = betabinom::posterior_beta(s.prior_c, s.arm_c);
    j["posterior"] = {{"a_trt", post_t.a}, {"b_trt", post_t.b}, {"a_con", post_c.a}, {"b_con", post_c.b}};
  } else {
    j["posterior"] = {{"a", post_t.a}, {"b", post_t.b}};
  }
  return j;
}

Json fallback_warnings(const betabinom::PposResult& res) {
  Json w = Json::array();
  if (res.fallbacks > 0) {
    w.push_back(std::to_string(res.fallbacks) +
                " final outcomes had a zero-variance z statistic and used the exact test instead");
  }
  return w;
}

Json run_betabinom(Request& r, const RunOptions& options) {
  const BetabinomSetup s = read_betabinom(r);
  r.finish("betabinom");
  check_cap(s, options);
  const betabinom::PposResult res = exact_betabinom(s, options);
  return envelope("betabinom", r, Json{{"ppos", res.ppos.value()}}, betabinom_internals(s, res),
                  fallback_warnings(res));
}

std::vector<double> default_grid(const NormalSetup& s, int points) {
  const core::InterimSummary interim = endpoints::to_interim(s.spec, s.alt);
  const endpoints::EffectMap map = endpoints::effect_map(s.spec, s.alt);
  const double spread = 4.0 * interim.k() / std::sqrt(interim.t());
  const double a = map.from_theta(interim.theta_hat() - spread);
  const double b = map.from_theta(interim.theta_hat() + spread);
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
  return grid;
}

Json run_curves(Request& r) {
  const NormalSetup s = read_interim(r, false);
  std::vector<double> grid;
  const bool explicit_grid = r.has("grid");
  const bool range = r.has("grid-from") || r.has("grid-to");
  if (explicit_grid && (range || r.has("grid-points"))) schema("key 'grid' excludes grid-from/grid-to/grid-points");
  const int grid_points = r.int32_or("grid-points", 101);
  if (explicit_grid) {
    grid = r.numbers("grid");
  } else {
    require_domain(grid_points >= 2, "grid-points >= 2");
    if (range) {
      r.require("grid-from", "a grid range");
      r.require("grid-to", "a grid range");
      const double from = r.number("grid-from");
      const double to = r.number("grid-to");
      require_domain(std::isfinite(from) && std::isfinite(to) && from < to, "grid-from < grid-to");
      for (int i = 0; i < grid_points; ++i) grid.push_back(from + (to - from) * i / (grid_points - 1));
    } else {
      grid = default_grid(s, grid_points);
    }
  }
  const int density_points = r.int32_or("density-points", 2001);
  r.finish(s.cell.label);

  const endpoints::CurveTable table = endpoints::curve(s.spec, s.alt, s.rule, s.prior, grid);
  const endpoints::DensityTable density = endpoints::predictive_density(s.spec, s.alt, s.prior, density_points);
  const endpoints::ResultBundle b = endpoints::evaluate(s.spec, s.alt, s.rule, s.prior, std::nullopt);

  Json curve_rows = Json::array();
  for (const auto& row : table.rows) {
    Json j{{"estimate", row.estimate}, {"cp_trend", row.cp_trend}, {"ppos_no_prior", row.ppos_no_prior}};
    if (row.ppos_with_prior) j["ppos_with_prior"] = *row.ppos_with_prior;
    curve_rows.push_back(std::move(j));
  }
  Json density_rows = Json::array();
  for (const auto& row : density.rows) {
    Json j{{"x", row.x}, {"density_no_prior", row.density_no_prior}};
    if (row.density_prior) j["density_prior"] = *row.density_prior;
    density_rows.push_back(std::move(j));
  }
  Json result;
  result["curve"] = std::move(curve_rows);
  result["density"] = std::move(density_rows);
  result["reference"] = {{"observed", table.observed}, {"power", 0.5}, {"crossing_estimate", table.crossing_estimate}};
  return envelope("curves", r, std::move(result), interim_internals(b), nullptr);
}

Json run_mc_se(Request& r, const RunOptions& options) {
  std::vector<int> events = r.has("D") ? r.integers("D") : std::vector<int>{20, 30, 40, 50, 60};
  if (events.empty()) schema("key 'D' must not be empty");
  if (r.has("N") && r.has("inflation")) schema("keys 'N' and 'inflation' are mutually exclusive");
  std::vector<std::pair<int, int>> cells;  // (N, D)
  if (r.has("N")) {
    const std::vector<int> sizes = r.integers("N");
    if (sizes.size() != events.size()) schema("keys 'N' and 'D' must have the same length");
    for (std::size_t i = 0; i < sizes.size(); ++i) cells.emplace_back(sizes[i], events[i]);
  } else {
    const std::vector<double> inflation =
        r.has("inflation") ? r.numbers("inflation") : std::vector<double>{1.0, 1.3, 1.5};
    if (inflation.empty()) schema("key 'inflation' must not be empty");
    for (double f : inflation) {
      require_domain(f >= 1.0 && std::isfinite(f), "inflation N/D >= 1");
      for (int d : events) cells.emplace_back(static_cast<int>(std::lround(d * f)), d);
    }
  }
  mcval::SimConfig base;
  base.median = r.number_or("med", 12.0);
  base.ltfu_rate = r.number_or("ltfu-rate", 0.000005);
  base.M = r.int32_or("M", 5000);
  base.seed = r.seed_or("seed", 20240101);
  r.finish("mc-se");

  Json rows = Json::array();
  Json warnings = Json::array();
  for (const auto& [n, d] : cells) {
    mcval::SimConfig cfg = base;
    cfg.N = n;
    cfg.D = d;
    const mcval::SeResult res = mcval::empirical_se_log_median(cfg, options.threads);
    Json row{{"N", res.N},
             {"D", res.D},
             {"med", res.median},
             {"sd_obs", res.empirical_se},
             {"sd_1_over_sqrtd", res.theory_1_over_sqrt_d},
             {"sd_log2", res.theory_log2},
             {"ltfu_rate", res.ltfu_rate},
             {"M", res.M},
             {"dropped", res.dropped},
             {"unreliable", res.unreliable}};
    if (res.se_of_se) row["se_of_sd"] = *res.se_of_se;
    if (res.unreliable) {
      warnings.push_back("N=" + std::to_string(n) + " D=" + std::to_string(d) +
                         ": more than 10% of replicates had no KM median");
    }
    rows.push_back(std::move(row));
  }
  return envelope("mc-se", r, Json{{"rows", std::move(rows)}}, Json::object(), std::move(warnings));
}

Json compare(double analytic, const mcval::McEstimate& mc) {
  Json j{{"analytic", analytic}, {"mc", mc.p}, {"se", mc.se}};
  j["z_score"] = mc.se > 0.0 ? (mc.p - analytic) / mc.se : 0.0;
  j["agrees_3se"] = mc.agrees_with(analytic, 3.0);
  return j;
}

Json run_mc_ppos(Request& r, const RunOptions& options) {
  const std::string engine = r.choice("engine", {"normal", "betabinom"}, "normal");
  mcval::McConfig cfg;
  cfg.sims = r.has("sims") ? r.integer("sims") : 200000;
  cfg.seed = r.seed_or("seed", 1);
  cfg.threads = options.threads;

  if (engine == "betabinom") {
    const BetabinomSetup s = read_betabinom(r);
    r.finish("mc-ppos engine=betabinom");
    check_cap(s, options);
    const betabinom::PposResult exact = exact_betabinom(s, options);
    const mcval::McEstimate mc =
        s.nsamples == 1 ? mcval::mc_ppos_betabinom(s.prior_t, s.arm_t, s.indicator, cfg)
                        : mcval::mc_ppos_betabinom(s.prior_t, s.prior_c, s.arm_t, s.arm_c, s.indicator, cfg);
    Json internals = betabinom_internals(s, exact);
    internals["sims"] = cfg.sims;
    internals["seed"] = cfg.seed;
    return envelope("mc-ppos", r, Json{{"ppos", compare(exact.ppos.value(), mc)}}, std::move(internals),
                    fallback_warnings(exact));
  }

  const NormalSetup s = read_interim(r, true);
  r.finish(s.cell.label);
  const endpoints::ResultBundle b = endpoints::evaluate(s.spec, s.alt, s.rule, s.prior, s.projected);
  Json result;
  result["cp_trend"] = compare(b.cp_trend.value(),
                               mcval::mc_cp(s.spec, s.alt, s.rule, endpoints::estimate_of(s.spec), cfg));
  result["ppos_no_prior"] = compare(b.ppos_no_prior.value(), mcval::mc_ppos(s.spec, s.alt, s.rule, std::nullopt, cfg));
  if (s.projected) {
    result["cp_specified"] = compare(b.cp_specified->value(), mcval::mc_cp(s.spec, s.alt, s.rule, *s.projected, cfg));
  }
  if (s.prior) {
    result["ppos_with_prior"] = compare(b.ppos_with_prior->value(), mcval::mc_ppos(s.spec, s.alt, s.rule, s.prior, cfg));
  }
  Json internals = interim_internals(b);
  internals["sims"] = cfg.sims;
  internals["seed"] = cfg.seed;
  return envelope("mc-ppos", r, std::move(result), std::move(internals), nullptr);
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"pos", "succ-ia", "betabinom", "curves", "mc-se", "mc-ppos"};
  return names;
}

const std::vector<KeySpec>& keys_for(std::string_view command) {
  const auto& tables = key_tables();
  const auto it = tables.find(command);
  if (it == tables.end()) schema("unknown command '" + std::string(command) + "'");
  return it->second;
}

Json run(std::string_view command, const Json& request, const RunOptions& options) {
  Request r(request, command);
  if (command == "pos") return run_pos(r);
  if (command == "succ-ia") return run_succ_ia(r, options);
  if (command == "betabinom") return run_betabinom(r, options);
  if (command == "curves") return run_curves(r);
  if (command == "mc-se") return run_mc_se(r, options);
  return run_mc_ppos(r, options);
}

Json error_body(const Error& error) {
  return Json{{"v", kSchemaVersion},
              {"error", {{"code", std::string(to_string(error.code()))}, {"message", error.what()}}}};
}

std::string canonical(const Json& value) { return value.dump(); }

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema: return 2;
    case ErrorCode::numerical: return 4;
    case ErrorCode::domain:
    case ErrorCode::degenerate_variance:
    case ErrorCode::estimation:
    case ErrorCode::size_cap: return 3;
  }
  return 4;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema: return 400;
    case ErrorCode::numerical: return 500;
    case ErrorCode::domain:
    case ErrorCode::degenerate_variance:
    case ErrorCode::estimation:
    case ErrorCode::size_cap: return 422;
  }
  return 500;
}

std::string version() { return PPOS_VERSION; }

}  // namespace ppos::api
