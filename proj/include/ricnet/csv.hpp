#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ricnet/data.hpp"

namespace ricnet {

inline constexpr const char* kDatasetHeader =
    "sample_id,depth_m,qc_ini_mpa,qc_post_mpa,blows,fill_thickness_m,fine_content_pct";

// Shortest decimal that parses back to the same double.
std::string format_double(double value);

// Errors name the 1-based line. Rows are grouped by sample_id in order of
// first appearance; each sample needs exactly the 28 grid depths.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_dataset_csv(const std::string& text);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);
std::string dataset_to_csv(const Dataset& dataset);

// Writes a header plus rows of pre-formatted cells; throws ValidationError
// if the file cannot be opened.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ricnet
