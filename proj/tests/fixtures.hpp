#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fixture {

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Golden {
  std::string name;
  std::string command;
  nlohmann::json request;
  std::string response;  // canonical JSON plus trailing newline
};

inline std::vector<Golden> goldens() {
  const std::filesystem::path dir = std::filesystem::path(PPOS_TEST_DATA_DIR) / "golden";
  std::vector<Golden> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string file = entry.path().filename().string();
    const std::string suffix = ".request.json";
    if (file.size() <= suffix.size() || file.compare(file.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const std::string name = file.substr(0, file.size() - suffix.size());
    const auto req = nlohmann::json::parse(slurp(entry.path()));
    out.push_back({name, req.at("command").get<std::string>(), req.at("request"),
                   slurp(dir / (name + ".response.json"))});
  }
  std::sort(out.begin(), out.end(), [](const Golden& a, const Golden& b) { return a.name < b.name; });
  return out;
}

struct ParityRow {
  std::string id;
  std::vector<std::string> args;                         // without the program name
  std::vector<std::pair<std::string, double>> expected;  // empty when no reference exists
  double tol = 0.0;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" `");
  const auto e = s.find_last_not_of(" `");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline std::vector<ParityRow> parity_rows() {
  std::istringstream doc(slurp(std::filesystem::path(PPOS_DOCS_DIR) / "r_parity.md"));
  std::vector<ParityRow> rows;
  std::string line;
  while (std::getline(doc, line)) {
    if (line.rfind("| ", 0) != 0 || line.rfind("| id ", 0) == 0) continue;
    std::vector<std::string> cells;
    std::istringstream in(line.substr(1));
    std::string cell;
    while (std::getline(in, cell, '|')) cells.push_back(trim(cell));
    if (cells.size() < 5) continue;
    ParityRow row;
    row.id = cells[0];
    std::istringstream words(cells[2]);
    std::string w;
    while (words >> w) row.args.push_back(w);
    if (!row.args.empty() && row.args.front() == "ppos") row.args.erase(row.args.begin());
    if (cells[3] != "-") {
      std::istringstream pairs(cells[3]);
      std::string kv;
      while (std::getline(pairs, kv, ';')) {
        const auto eq = kv.find('=');
        row.expected.emplace_back(trim(kv.substr(0, eq)), std::stod(kv.substr(eq + 1)));
      }
      row.tol = std::stod(cells[4]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fixture
