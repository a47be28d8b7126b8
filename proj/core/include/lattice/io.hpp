#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "lattice/lattice.hpp"

namespace lattice {

/// Writes the dataset as CSV: `y1..yD` (1-based categories) followed by
/// `x<d>_<name>` covariate columns, header first. Values are written in
/// shortest round-trip form so a read-back is exact.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
[[nodiscard]] std::string dataset_to_csv(const Dataset& data);

/// Reads a dataset CSV. Covariate columns named `x<d>_<name>` are assigned
/// to dimension d. Any other covariate naming needs a sidecar JSON of the
/// form {"dimensions": [["col", ...], ["col", ...]]} listing the columns of
/// each dimension (a column may appear in several dimensions).
[[nodiscard]] Dataset read_dataset_csv(const std::filesystem::path& path,
                                       const std::optional<std::filesystem::path>& sidecar = std::nullopt);
[[nodiscard]] Dataset dataset_from_csv(std::string_view text, std::string_view sidecar_json = {});

/// {"thresholds": [[...], ...]}
[[nodiscard]] std::string lattice_to_json(const LatticeSpec& spec);
[[nodiscard]] LatticeSpec lattice_from_json(std::string_view text);

/// {"beta": [[...], ...]}
[[nodiscard]] std::string index_model_to_json(const IndexModel& model);
[[nodiscard]] IndexModel index_model_from_json(std::string_view text);

[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Shortest round-trip decimal for a double.
[[nodiscard]] std::string format_double(double x);

}  // namespace lattice
