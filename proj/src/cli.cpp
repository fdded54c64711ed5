#include "ppos/cli.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ppos/api.hpp"

namespace ppos::cli {

namespace {

using api::Json;
using api::KeyType;

[[noreturn]] void usage(const std::string& message) { fail(ErrorCode::schema, message); }

double parse_number(const std::string& flag, const std::string& text) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE) {
    usage("flag --" + flag + " expects a number, got '" + text + "'");
  }
  return v;
}

std::int64_t parse_integer(const std::string& flag, const std::string& text) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE) {
    usage("flag --" + flag + " expects an integer, got '" + text + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

Json flag_value(const api::KeySpec& key, const std::string& text) {
  switch (key.type) {
    case KeyType::number: return parse_number(key.name, text);
    case KeyType::integer:
      if (key.name == "seed" && !text.empty() && text[0] != '-') {
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
        if (end == text.c_str() + text.size() && errno == 0) return static_cast<std::uint64_t>(v);
      }
      return parse_integer(key.name, text);
    case KeyType::string: return text;
    case KeyType::boolean: {
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      usage("flag --" + key.name + " expects true or false, got '" + text + "'");
    }
    case KeyType::number_list:
    case KeyType::integer_list: {
      Json list = Json::array();
      if (text.empty()) return list;
      for (const std::string& part : split(text, ',')) {
        if (key.type == KeyType::number_list) {
          list.push_back(parse_number(key.name, part));
        } else {
          list.push_back(parse_integer(key.name, part));
        }
      }
      return list;
    }
  }
  return text;
}

Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) usage("cannot read config file '" + path + "'");
  Json body = Json::parse(in, nullptr, false);
  if (body.is_discarded() || !body.is_object()) usage("config file '" + path + "' is not a JSON object");
  return body;
}

// ---------------------------------------------------------------------------
// Output

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
};

void flatten(const std::string& prefix, const Json& value, std::vector<std::string>& columns,
             std::vector<Json>& row) {
  for (const auto& [key, v] : value.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (v.is_object()) {
      flatten(name, v, columns, row);
    } else {
      columns.push_back(name);
      row.push_back(v);
    }
  }
}

Table object_rows(const std::string& name, const Json& rows, std::vector<std::string> columns) {
  Table t{name, std::move(columns), {}};
  for (const Json& r : rows) {
    std::vector<Json> row;
    for (const std::string& c : t.columns) row.push_back(r.contains(c) ? r.at(c) : Json());
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<Table> tables_of(const std::string& command, const Json& response) {
  const Json& result = response.at("result");
  if (command == "curves") {
    const bool prior = !result.at("curve").empty() && result.at("curve")[0].contains("ppos_with_prior");
    std::vector<std::string> curve_cols{"estimate", "cp_trend", "ppos_no_prior"};
    std::vector<std::string> density_cols{"x", "density_no_prior"};
    if (prior) {
      curve_cols.push_back("ppos_with_prior");
      density_cols.push_back("density_prior");
    }
    return {object_rows("curve", result.at("curve"), curve_cols),
            object_rows("density", result.at("density"), density_cols)};
  }
  if (command == "mc-se") {
    return {object_rows("mc-se", result.at("rows"),
                        {"N", "D", "med", "sd_obs", "sd_1_over_sqrtd", "sd_log2", "ltfu_rate", "M"})};
  }
  if (command == "mc-ppos") {
    Table t{"mc-ppos", {"measure", "analytic", "mc", "se", "z_score", "agrees_3se"}, {}};
    for (const auto& [measure, v] : result.items()) {
      t.rows.push_back({measure, v.at("analytic"), v.at("mc"), v.at("se"), v.at("z_score"), v.at("agrees_3se")});
    }
    return {t};
  }
  Table t{command, {}, {{}}};
  flatten("", result, t.columns, t.rows[0]);
  flatten("", response.at("internals"), t.columns, t.rows[0]);
  return {t};
}

std::string format_cell(const Json& v, bool table) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  char buf[64];
  std::snprintf(buf, sizeof buf, table ? "%.4f" : "%.10g", v.get<double>());
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_csv(const Table& t, std::ostream& os) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << csv_quote(t.columns[i]);
  os << "\r\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_quote(format_cell(row[i], false));
    os << "\r\n";
  }
}

void write_table(const Table& t, std::ostream& os) {
  if (t.rows.size() == 1 && t.columns.size() > 1 && t.name != "mc-se") {
    std::size_t width = 0;
    for (const auto& c : t.columns) width = std::max(width, c.size());
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      os << t.columns[i] << std::string(width - t.columns[i].size() + 2, ' ') << format_cell(t.rows[0][i], true)
         << "\n";
    }
    return;
  }
  std::vector<std::size_t> width(t.columns.size());
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
  for (const auto& row : t.rows) {
    std::vector<std::string> line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line.push_back(format_cell(row[i], true));
      width[i] = std::max(width[i], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    os << (i ? "  " : "") << std::string(width[i] - t.columns[i].size(), ' ') << t.columns[i];
  }
  os << "\n";
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      os << (i ? "  " : "") << std::string(width[i] - line[i].size(), ' ') << line[i];
    }
    os << "\n";
  }
}

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& name) {
  std::filesystem::path out = path;
  out.replace_filename(path.stem().string() + "-" + name + path.extension().string());
  return out;
}

void emit(const std::string& command, const Json& response, const std::string& format,
          const std::string& output, std::ostream& out, std::ostream& err) {
  if (format != "json") {
    for (const Json& w : response.at("warnings")) err << "warning: " << w.get<std::string>() << "\n";
  }
  const auto open = [&](const std::filesystem::path& path) {
    auto file = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file) fail(ErrorCode::domain, "cannot write output file '" + path.string() + "'");
    return file;
  };

  if (format == "json") {
    const std::string text = api::canonical(response) + "\n";
    if (output.empty()) {
      out << text;
    } else {
      *open(output) << text;
    }
    return;
  }

  const std::vector<Table> tables = tables_of(command, response);
  if (format == "csv" && !output.empty()) {
    for (std::size_t i = 0; i < tables.size(); ++i) {
      const std::filesystem::path path = i == 0 ? std::filesystem::path(output) : sibling(output, tables[i].name);
      write_csv(tables[i], *open(path));
    }
    return;
  }

  std::ostringstream text;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i) text << "\n";
    if (format == "csv") {
      write_csv(tables[i], text);
    } else {
      if (tables.size() > 1) text << "# " << tables[i].name << "\n";
      write_table(tables[i], text);
    }
  }
  if (command == "curves" && format == "table") {
    const Json& ref = response.at("result").at("reference");
    text << "\nobserved " << format_cell(ref.at("observed"), true) << ", power 0.5 at estimate "
         << format_cell(ref.at("crossing_estimate"), true) << "\n";
  }
  if (output.empty()) {
    out << text.str();
  } else {
    *open(output) << text.str();
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional power, predictive power of success and probability of success"};
  app.name("ppos");
  app.require_subcommand(1);
  app.set_version_flag("--version", api::version());
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  struct Sub {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  std::map<std::string, Sub> subs;
  std::string config;
  std::string format = "json";
  std::string output;
  int threads = 1;
  std::int64_t cap = api::RunOptions{}.betabinom_cap;

  static const std::map<std::string, std::string> kDescriptions = {
      {"pos", "probability of success at the design stage"},
      {"succ-ia", "conditional power and predictive power of success at an interim look"},
      {"betabinom", "exact predictive power of success for binary endpoints with beta priors"},
      {"curves", "CP/PPoS against the interim estimate, and predictive densities"},
      {"mc-se", "simulated SE of the log Kaplan-Meier median"},
      {"mc-ppos", "simulation check of CP/PPoS against the closed forms"},
  };

  for (const std::string& name : api::commands()) {
    Sub& sub = subs[name];
    sub.app = app.add_subcommand(name, kDescriptions.at(name));
    for (const api::KeySpec& key : api::keys_for(name)) {
      sub.options[key.name] = sub.app->add_option("--" + key.name, sub.values[key.name], key.help);
    }
    sub.app->add_option("--config", config, "JSON request file; flags override its values");
    sub.app->add_option("--format", format, "json | csv | table")
        ->check(CLI::IsMember({"json", "csv", "table"}));
    sub.app->add_option("--output,-o", output, "write to this file instead of standard output");
    sub.app->add_option("--threads", threads, "worker threads for simulation and exact sums")
        ->check(CLI::PositiveNumber);
    if (name == "betabinom" || name == "mc-ppos") {
      sub.app->add_option("--betabinom-cap", cap, "max indicator evaluations, 0 disables");
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  for (auto& [name, sub] : subs) {
    if (!sub.app->parsed()) continue;
    try {
      Json request = config.empty() ? Json::object() : load_config(config);
      for (const api::KeySpec& key : api::keys_for(name)) {
        if (sub.options.at(key.name)->count() > 0) request[key.name] = flag_value(key, sub.values.at(key.name));
      }
      api::RunOptions options;
      options.threads = threads;
      options.betabinom_cap = cap;
      options.allow_final_analysis = true;
      const Json response = api::run(name, request, options);
      emit(name, response, format, output, out, err);
      return 0;
    } catch (const Error& e) {
      err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
      return api::exit_code(e.code());
    } catch (const Json::exception& e) {
      err << "error (schema_violation): " << e.what() << "\n";
      return 2;
    }
  }
  return 2;
}

}  // namespace ppos::cli
