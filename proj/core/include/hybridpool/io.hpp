#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hybridpool/estimate.hpp"
#include "hybridpool/fisher.hpp"
#include "hybridpool/likelihood.hpp"
#include "hybridpool/model.hpp"

namespace hybridpool::io {

/// Shortest decimal text that round-trips to the same double; "inf",
/// "-inf" and "nan" for non-finite values.
std::string format_double(double value);

/// Strict decimal parse of a whole field; nullopt on any trailing text.
std::optional<double> parse_double(std::string_view text);

/// Dataset rows: `assay_id,group,pool_size,gamma,replicate,value` with the
/// literal NA for censored values. Groups are 0-based indices into the
/// design.
std::string dataset_to_csv(const Dataset& data);

/// Metadata carried next to a dataset file.
struct DatasetHeader {
  std::optional<double> llod;
  std::optional<Family> family;
  std::optional<int> total_specimens;
};

std::string dataset_header_to_json(const Dataset& data);
DatasetHeader dataset_header_from_json(std::string_view text);

/// Parses dataset rows and rebuilds the design from them (group pool
/// sizes, flags, assay counts and replicate counts). The LLOD must come from
/// `header` (ConfigError otherwise). N defaults to the specimens used.
/// Errors cite the offending line.
Dataset dataset_from_csv(std::string_view text, const DatasetHeader& header);

/// Duplicate measurements in the dataset row format. Assays of pool size 1
/// give individual differences, larger pools pooled ones. Every assay id
/// must have numeric replicates 1 and 2; otherwise ConfigError listing the
/// offending ids.
ReplicatePairSet replicate_pairs_from_csv(std::string_view text);

/// One number per line; a non-numeric first line is taken as a header.
std::vector<double> raw_values_from_csv(std::string_view text);
std::string raw_values_to_csv(const std::vector<double>& values);

/// Long-format sweep table: llod, alpha, then nvar_<param> per parameter
/// and, when `empirical`, bias_<param> per parameter and failures. All
/// results must share one parameter list.
std::string sweep_to_csv(const std::vector<SweepResult>& results, bool empirical);

std::string fit_result_to_json(const FitResult& fit);
std::string error_estimate_to_json(const ErrorVarianceEstimate& variances,
                                   const LaplaceScaleFit& individual,
                                   const LaplaceScaleFit& pooled, double scale_c,
                                   double scale_d);

std::string read_text_file(const std::filesystem::path& path);
/// Writes to a temporary file in the same directory, then renames it over
/// `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace hybridpool::io
