#include "ricnet/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ricnet/errors.hpp"

namespace ricnet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& field, const char* column, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError("line " + std::to_string(line) + ": column " + column + ": not a number: '" + field + "'");
  }
  return v;
}

struct PendingSample {
  SoilSample sample;
  std::vector<double> depths;
  std::size_t first_line = 0;
  std::size_t missing_post = 0;
};

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

Dataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  const auto expected = split_fields(kDatasetHeader);
  bool have_header = false;
  std::vector<PendingSample> pending;
  std::map<std::string, std::size_t> by_id;

  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (!have_header) {
      if (fields != expected) {
        throw ValidationError("line " + std::to_string(line_no) + ": header must be '" + kDatasetHeader + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != expected.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 7 fields, got " +
                            std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    if (id.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty sample_id");
    const double depth = parse_number(fields[1], "depth_m", line_no);
    const double qc_ini = parse_number(fields[2], "qc_ini_mpa", line_no);
    const bool has_post = !fields[3].empty();
    const double qc_post = has_post ? parse_number(fields[3], "qc_post_mpa", line_no) : 0.0;
    CompactionFeatures f{parse_number(fields[4], "blows", line_no), parse_number(fields[5], "fill_thickness_m", line_no),
                         parse_number(fields[6], "fine_content_pct", line_no)};
    if (!(qc_ini > 0.0)) throw ValidationError("line " + std::to_string(line_no) + ": qc_ini_mpa must be positive");
    if (has_post && !(qc_post > 0.0)) {
      throw ValidationError("line " + std::to_string(line_no) + ": qc_post_mpa must be positive");
    }
    try {
      f.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }

    auto [it, inserted] = by_id.try_emplace(id, pending.size());
    if (inserted) {
      PendingSample p;
      p.sample.id = id;
      p.sample.features = f;
      p.first_line = line_no;
      pending.push_back(std::move(p));
    }
    auto& p = pending[it->second];
    if (!(p.sample.features == f)) {
      throw ValidationError("line " + std::to_string(line_no) + ": features of sample '" + id +
                            "' differ from its first row (line " + std::to_string(p.first_line) + ")");
    }
    if (!p.depths.empty() && !(depth > p.depths.back())) {
      throw ValidationError("line " + std::to_string(line_no) + ": depths of sample '" + id + "' must increase");
    }
    p.depths.push_back(depth);
    p.sample.qc_ini.push_back(qc_ini);
    p.sample.qc_post.push_back(qc_post);
    if (!has_post) ++p.missing_post;
  }
  if (!have_header) throw ValidationError("line 1: missing header");

  Dataset ds;
  ds.provenance = Provenance::csv;
  const auto& grid = depth_grid();
  for (auto& p : pending) {
    const std::string where = "sample '" + p.sample.id + "' (line " + std::to_string(p.first_line) + "): ";
    if (p.depths.size() != kProfileLength) {
      throw ValidationError(where + "expected 28 depth rows, got " + std::to_string(p.depths.size()));
    }
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      if (std::abs(p.depths[d] - grid[d]) > 1e-9) {
        throw ValidationError(where + "depth " + format_double(p.depths[d]) + " is off the 0.25 m grid");
      }
    }
    if (p.missing_post == kProfileLength) {
      p.sample.qc_post.clear();
    } else if (p.missing_post != 0) {
      throw ValidationError(where + "qc_post_mpa must be given on all rows or on none");
    }
    ds.samples.push_back(std::move(p.sample));
  }
  if (ds.samples.empty()) throw ValidationError("dataset contains no samples");
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) { return parse_dataset_csv(read_text(path)); }

std::string dataset_to_csv(const Dataset& dataset) {
  std::string out = std::string(kDatasetHeader) + "\n";
  const auto& grid = depth_grid();
  for (const auto& s : dataset.samples) {
    s.validate();
    for (std::size_t d = 0; d < kProfileLength; ++d) {
      out += s.id;
      out += ',' + format_double(grid[d]);
      out += ',' + format_double(s.qc_ini[d]);
      out += ',' + (s.has_target() ? format_double(s.qc_post[d]) : std::string());
      out += ',' + format_double(s.features.blows);
      out += ',' + format_double(s.features.fill_thickness);
      out += ',' + format_double(s.features.fine_content);
      out += '\n';
    }
  }
  return out;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) { write_text(path, dataset_to_csv(dataset)); }

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto join = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  join(header);
  for (const auto& r : rows) join(r);
  write_text(path, out);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
  if (!f) throw ValidationError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace ricnet
