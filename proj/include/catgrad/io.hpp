#pragma once

#include <optional>
#include <string>
#include <vector>

namespace catgrad {

// 17 significant digits: doubles round-trip losslessly through the CSV.
std::string format_double(double x);

std::string csv_escape(const std::string& field);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_string() const;
};

void write_text_file(const std::string& path, const std::string& contents);

// Flat key=value config format: one pair per line, '#' or ';' comments,
// optional quotes around values. Sections are rejected; keys match flag
// names without the leading dashes.
std::vector<std::pair<std::string, std::string>> parse_flat_config(const std::string& path);

}  // namespace catgrad
