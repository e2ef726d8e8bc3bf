#include "hybridpool/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "hybridpool/error.hpp"


namespace hybridpool::io {
namespace {

using nlohmann::json;

constexpr std::string_view kDatasetHeader = "assay_id,group,pool_size,gamma,replicate,value";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Calls f(line_number, line) for every non-blank line.
template <class F>
void for_each_line(std::string_view text, F&& f) {
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto line = trim(text.substr(start, end - start));
    ++number;
    if (!line.empty()) f(number, line);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
}

[[noreturn]] void line_error(int line, const std::string& message) {
  throw ConfigError("line " + std::to_string(line) + ": " + message);
}

int parse_int_field(std::string_view field, int line, const char* name) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    line_error(line, std::string(name) + " is not an integer: '" + std::string(field) + "'");
  }
  return value;
}

struct Row {
  int line;
  int assay_id;
  int group;
  int pool_size;
  int gamma;
  int replicate;
  std::optional<double> value;
};

std::vector<Row> parse_rows(std::string_view text) {
  std::vector<Row> rows;
  bool header_seen = false;
  for_each_line(text, [&](int line, std::string_view content) {
    if (!header_seen) {
      std::string normalized;
      for (auto f : split_fields(content)) {
        if (!normalized.empty()) normalized += ',';
        normalized += f;
      }
      if (normalized != kDatasetHeader) {
        line_error(line, "expected header '" + std::string(kDatasetHeader) + "'");
      }
      header_seen = true;
      return;
    }
    const auto fields = split_fields(content);
    if (fields.size() != 6) {
      line_error(line, "expected 6 fields, found " + std::to_string(fields.size()));
    }
    Row row{line,
            parse_int_field(fields[0], line, "assay_id"),
            parse_int_field(fields[1], line, "group"),
            parse_int_field(fields[2], line, "pool_size"),
            parse_int_field(fields[3], line, "gamma"),
            parse_int_field(fields[4], line, "replicate"),
            std::nullopt};
    if (fields[5] != "NA") {
      const auto v = parse_double(fields[5]);
      if (!v || !std::isfinite(*v)) {
        line_error(line, "value is neither a finite number nor NA: '" +
                             std::string(fields[5]) + "'");
      }
      row.value = *v;
    }
    if (row.pool_size < 1) line_error(line, "pool_size must be at least 1");
    if (row.gamma != 0 && row.gamma != 1) line_error(line, "gamma must be 0 or 1");
    if (row.replicate < 1) line_error(line, "replicate must be at least 1");
    if (row.group < 0) line_error(line, "group must be non-negative");
    rows.push_back(row);
  });
  if (!header_seen) throw ConfigError("data file is empty");
  return rows;
}

json named_values_json(const NamedValues& values) {
  json out = json::object();
  for (const auto& [name, v] : values) out[name] = v;
  return out;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, ptr);
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out(kDatasetHeader);
  out += '\n';
  for (const auto& obs : data.observations) {
    const auto& g = data.design.groups.at(static_cast<std::size_t>(obs.group_index));
    out += std::to_string(obs.assay_id) + ',' + std::to_string(obs.group_index) + ',' +
           std::to_string(g.pool_size) + ',' + std::to_string(g.gamma_flag) + ',' +
           std::to_string(obs.replicate_index) + ',' +
           (obs.value ? format_double(*obs.value) : std::string("NA")) + '\n';
  }
  return out;
}

std::string dataset_header_to_json(const Dataset& data) {
  json j;
  j["llod"] = std::isfinite(data.llod) ? json(data.llod) : json(format_double(data.llod));
  if (data.family) j["family"] = std::string(to_string(*data.family));
  j["N"] = data.design.total_specimens;
  return j.dump(2) + '\n';
}

DatasetHeader dataset_header_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("data header is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("data header must be a JSON object");
  DatasetHeader header;
  if (j.contains("llod")) {
    const auto& v = j["llod"];
    if (v.is_number()) {
      header.llod = v.get<double>();
    } else if (v.is_string()) {
      header.llod = parse_double(v.get<std::string>());
      if (!header.llod) throw ConfigError("data header llod is not a number");
    } else {
      throw ConfigError("data header llod is not a number");
    }
  }
  if (j.contains("family")) {
    if (!j["family"].is_string()) throw ConfigError("data header family must be a string");
    header.family = parse_family(j["family"].get<std::string>());
  }
  if (j.contains("N")) {
    if (!j["N"].is_number_integer()) throw ConfigError("data header N must be an integer");
    header.total_specimens = j["N"].get<int>();
  }
  return header;
}

Dataset dataset_from_csv(std::string_view text, const DatasetHeader& header) {
  if (!header.llod) {
    throw ConfigError("llod is missing: give it in the data header or with --llod");
  }
  const auto rows = parse_rows(text);
  if (rows.empty()) throw ConfigError("data file has no rows");

  struct GroupInfo {
    int pool_size;
    int gamma;
    int first_line;
    std::set<int> assays;
    int replicates = 0;
  };
  std::map<int, GroupInfo> groups;
  std::map<int, int> assay_group;
  for (const auto& row : rows) {
    auto [it, inserted] =
        groups.try_emplace(row.group, GroupInfo{row.pool_size, row.gamma, row.line, {}, 0});
    if (!inserted && (it->second.pool_size != row.pool_size || it->second.gamma != row.gamma)) {
      line_error(row.line, "group " + std::to_string(row.group) +
                               " has pool_size/gamma different from line " +
                               std::to_string(it->second.first_line));
    }
    const auto [a, fresh] = assay_group.try_emplace(row.assay_id, row.group);
    if (!fresh && a->second != row.group) {
      line_error(row.line, "assay " + std::to_string(row.assay_id) + " appears in two groups");
    }
    it->second.assays.insert(row.assay_id);
    it->second.replicates = std::max(it->second.replicates, row.replicate);
  }
  if (groups.rbegin()->first != static_cast<int>(groups.size()) - 1) {
    throw ConfigError("group indices must be contiguous from 0");
  }

  Dataset data;
  data.llod = *header.llod;
  data.family = header.family;
  for (const auto& [index, info] : groups) {
    data.design.groups.push_back({info.pool_size, info.gamma,
                                  static_cast<int>(info.assays.size()), info.replicates});
  }
  data.design.total_assays = static_cast<int>(assay_group.size());
  data.design.total_specimens = header.total_specimens.value_or(data.design.specimens_used());
  for (const auto& row : rows) {
    if (row.value && *row.value < data.llod) {
      line_error(row.line, "numeric value " + format_double(*row.value) +
                               " is below the llod " + format_double(data.llod) +
                               "; censored values must be NA");
    }
    data.observations.push_back({row.assay_id, row.group, row.replicate, row.value});
  }
  data.validate();
  return data;
}

ReplicatePairSet replicate_pairs_from_csv(std::string_view text) {
  const auto rows = parse_rows(text);
  struct Pair {
    int pool_size = 1;
    std::optional<double> first;
    std::optional<double> second;
    int extra = 0;
  };
  std::map<int, Pair> pairs;
  for (const auto& row : rows) {
    auto& p = pairs[row.assay_id];
    p.pool_size = row.pool_size;
    if (row.replicate == 1 && !p.first) {
      p.first = row.value ? row.value : std::optional<double>(std::nan(""));
    } else if (row.replicate == 2 && !p.second) {
      p.second = row.value ? row.value : std::optional<double>(std::nan(""));
    } else {
      ++p.extra;
    }
  }
  std::vector<int> bad;
  ReplicatePairSet out;
  for (const auto& [id, p] : pairs) {
    if (!p.first || !p.second || p.extra > 0 || std::isnan(*p.first) || std::isnan(*p.second)) {
      bad.push_back(id);
      continue;
    }
    (p.pool_size == 1 ? out.individual_diffs : out.pooled_diffs).push_back(*p.first - *p.second);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "assays without exactly two numeric replicates:";
    for (std::size_t i = 0; i < bad.size() && i < 20; ++i) os << ' ' << bad[i];
    if (bad.size() > 20) os << " ... (" << bad.size() << " in total)";
    throw ConfigError(os.str());
  }
  return out;
}

std::vector<double> raw_values_from_csv(std::string_view text) {
  std::vector<double> out;
  bool first = true;
  for_each_line(text, [&](int line, std::string_view content) {
    const auto fields = split_fields(content);
    const auto v = parse_double(fields.front());
    if (!v || !std::isfinite(*v)) {
      if (first) {
        first = false;
        return;
      }
      line_error(line, "not a finite number: '" + std::string(fields.front()) + "'");
    }
    first = false;
    out.push_back(*v);
  });
  if (out.empty()) throw ConfigError("raw value file has no values");
  return out;
}

std::string raw_values_to_csv(const std::vector<double>& values) {
  std::string out = "value\n";
  for (double v : values) out += format_double(v) + '\n';
  return out;
}

std::string sweep_to_csv(const std::vector<SweepResult>& results, bool empirical) {
  if (results.empty()) throw ConfigError("no sweep results to write");
  const auto& params = results.front().parameters;
  std::string out = "llod,alpha";
  for (const auto& p : params) out += ",nvar_" + p;
  if (empirical) {
    for (const auto& p : params) out += ",bias_" + p;
    out += ",failures";
  }
  out += '\n';
  for (const auto& result : results) {
    if (result.parameters != params) throw ConfigError("sweep results disagree on parameters");
    for (const auto& row : result.rows) {
      out += format_double(result.llod) + ',' + format_double(row.alpha);
      for (const auto& [name, v] : row.scaled_variances) out += ',' + format_double(v);
      if (empirical) {
        for (const auto& [name, v] : row.bias) out += ',' + format_double(v);
        out += ',' + std::to_string(row.failures);
      }
      out += '\n';
    }
  }
  return out;
}

std::string fit_result_to_json(const FitResult& fit) {
  json j;
  j["family"] = std::string(to_string(fit.estimates.family()));
  json estimates = json::object();
  const auto names = parameter_names(fit.estimates.family());
  const auto values = fit.estimates.params();
  json fixed = json::array();
  for (std::size_t i = 0; i < kParamCount; ++i) {
    estimates[std::string(names[i])] = values[i];
    if (!fit.free[i]) fixed.push_back(std::string(names[i]));
  }
  j["estimates"] = estimates;
  j["fixed"] = fixed;
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["evaluations"] = fit.evaluations;
  j["scaled_gradient_norm"] = fit.scaled_gradient_norm;
  if (fit.covariance) {
    j["standard_errors"] = named_values_json(fit.standard_errors());
    json cov = json::array();
    for (Eigen::Index r = 0; r < fit.covariance->rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < fit.covariance->cols(); ++c) row.push_back((*fit.covariance)(r, c));
      cov.push_back(row);
    }
    j["covariance"] = cov;
  } else {
    j["standard_errors"] = nullptr;
  }
  if (!fit.message.empty()) j["message"] = fit.message;
  return j.dump(2) + '\n';
}

std::string error_estimate_to_json(const ErrorVarianceEstimate& variances,
                                   const LaplaceScaleFit& individual,
                                   const LaplaceScaleFit& pooled, double scale_c,
                                   double scale_d) {
  json j;
  j["var_individual_diff"] = variances.var_individual_diff;
  j["var_pooled_diff"] = variances.var_pooled_diff;
  j["var_m"] = variances.var_m;
  j["var_p"] = variances.var_p;
  j["var_p_floored"] = variances.var_p_floored;
  j["laplace_individual_diff_scale"] = individual.diff_scale;
  j["laplace_pooled_diff_scale"] = pooled.diff_scale;
  j["scale_c"] = scale_c;
  j["scale_d"] = scale_d;
  return j.dump(2) + '\n';
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("output directory '" + dir.string() + "' does not exist");
  }
  auto temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + temp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ConfigError("write to '" + temp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) {
    std::filesystem::remove(temp);
    throw ConfigError("cannot move output into place at '" + path.string() + "': " + ec.message());
  }
}

}  // namespace hybridpool::io
