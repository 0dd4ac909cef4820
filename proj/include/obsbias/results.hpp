#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "obsbias/config.hpp"
#include "obsbias/csv.hpp"
#include "obsbias/error.hpp"
#include "obsbias/pipeline.hpp"
#include "obsbias/version.hpp"

namespace obsbias {

/// Everything one analysis run produced. Wall time is diagnostic output
/// (stderr), never serialized: emitted files must be byte-stable across
/// identical runs.
struct RunArtifact {
  AnalysisConfig config;
  ObservedBiasRecord full;
  std::vector<ObservedBiasRecord> records;  // ordered, full row included
  std::vector<BalanceRecord> balance;
  std::string version = obsbias::version();
  std::string input_digest;  // SHA-256 of the ingested bytes, hex
  double wall_seconds = 0.0;
};

namespace detail {

/// Canonical float formatting: 9 significant digits, NaN -> empty.
inline std::string canonical_number(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void json_escape(const std::string& s, std::string& out) {
  out.push_back('"');
  for (char c : s) {
    switch (c) {
      case '"':
        out += "\\\"";
        break;
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      case '\t':
        out += "\\t";
        break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x",
                        static_cast<unsigned>(c));
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  out.push_back('"');
}

inline void json_number(double v, std::string& out) {
  if (std::isnan(v)) {
    out += "null";
  } else {
    out += canonical_number(v);
  }
}

inline void json_record(const ObservedBiasRecord& rec, std::string& out) {
  out += "{";
  if (rec.failed()) {
    out += "\"error\":";
    json_escape(rec.error, out);
    out += ",";
  }
  out += "\"estimate\":";
  json_number(rec.estimate, out);
  out += ",\"kind\":";
  json_escape(to_string(rec.kind), out);
  out += ",\"label\":";
  json_escape(rec.label, out);
  out += ",\"lcl\":";
  json_number(rec.lcl, out);
  out += ",\"oce\":";
  json_number(rec.oce, out);
  out += ",\"ucl\":";
  json_number(rec.ucl, out);
  out += "}";
}

}  // namespace detail

/// Canonical JSON: keys sorted at every level, floats at 9 significant
/// digits, NaN as null. Byte-stable for identical inputs.
inline std::string results_json(const RunArtifact& artifact) {
  std::string out;
  out += "{\"balance\":[";
  for (std::size_t i = 0; i < artifact.balance.size(); ++i) {
    if (i > 0) out += ",";
    const auto& b = artifact.balance[i];
    out += "{\"covariate\":";
    detail::json_escape(b.covariate, out);
    out += ",\"smd_unweighted\":";
    detail::json_number(b.smd_unweighted, out);
    out += ",\"smd_weighted\":";
    detail::json_number(b.smd_weighted, out);
    out += "}";
  }
  out += "],\"config\":{";
  {
    const auto& cfg = artifact.config;
    out += "\"ci_level\":";
    detail::json_number(cfg.ci_level, out);
    out += ",\"covariates\":[";
    for (std::size_t i = 0; i < cfg.covariates.size(); ++i) {
      if (i > 0) out += ",";
      detail::json_escape(cfg.covariates[i], out);
    }
    out += "],\"event\":";
    detail::json_escape(cfg.event, out);
    out += ",\"exposure\":";
    detail::json_escape(cfg.exposure, out);
    out += ",\"groups\":{";
    std::map<std::string, const std::vector<std::string>*> sorted_groups;
    for (const auto& [name, members] : cfg.groups) {
      sorted_groups.emplace(name, &members);
    }
    bool first = true;
    for (const auto& [name, members] : sorted_groups) {
      if (!first) out += ",";
      first = false;
      detail::json_escape(name, out);
      out += ":[";
      for (std::size_t i = 0; i < members->size(); ++i) {
        if (i > 0) out += ",";
        detail::json_escape((*members)[i], out);
      }
      out += "]";
    }
    out += "},\"outcome_common\":";
    out += cfg.outcome_common ? "true" : "false";
    out += ",\"time\":";
    detail::json_escape(cfg.time, out);
  }
  out += "},\"full\":";
  detail::json_record(artifact.full, out);
  out += ",\"input_digest\":";
  detail::json_escape(artifact.input_digest, out);
  out += ",\"records\":[";
  for (std::size_t i = 0; i < artifact.records.size(); ++i) {
    if (i > 0) out += ",";
    detail::json_record(artifact.records[i], out);
  }
  out += "],\"version\":";
  detail::json_escape(artifact.version, out);
  out += "}";
  out += "\n";
  return out;
}

/// Records table: label,kind,estimate,lcl,ucl,oce. Failed records leave
/// their numeric cells empty; the full record has an empty oce cell.
inline std::string records_csv(const std::vector<ObservedBiasRecord>& records) {
  std::string out = "label,kind,estimate,lcl,ucl,oce\n";
  for (const auto& rec : records) {
    std::string label;
    detail::quote_csv_field(rec.label, label);
    out += label;
    out += ",";
    out += to_string(rec.kind);
    out += ",";
    out += detail::canonical_number(rec.estimate);
    out += ",";
    out += detail::canonical_number(rec.lcl);
    out += ",";
    out += detail::canonical_number(rec.ucl);
    out += ",";
    out += detail::canonical_number(rec.oce);
    out += "\n";
  }
  return out;
}

/// Write the artifact JSON plus the sibling records CSV (same path with
/// a .csv extension).
inline void write_results(const RunArtifact& artifact,
                          const std::filesystem::path& json_path) {
  {
    std::ofstream out(json_path, std::ios::binary);
    if (!out) {
      throw io_error("cannot open '" + json_path.string() +
                     "' for writing");
    }
    out << results_json(artifact);
    if (!out) {
      throw io_error("write failed for '" + json_path.string() + "'");
    }
  }
  std::filesystem::path csv_path = json_path;
  csv_path.replace_extension(".csv");
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) {
    throw io_error("cannot open '" + csv_path.string() + "' for writing");
  }
  out << records_csv(artifact.records);
  if (!out) {
    throw io_error("write failed for '" + csv_path.string() + "'");
  }
}

/// Read back a results JSON (for re-plotting).
inline RunArtifact read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(path.string() + ": " + e.what());
  }
  const auto to_double = [](const nlohmann::json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                       : v.get<double>();
  };
  const auto to_record = [&](const nlohmann::json& v) {
    ObservedBiasRecord rec;
    rec.label = v.at("label").get<std::string>();
    const auto kind = v.at("kind").get<std::string>();
    if (kind == "covariate") {
      rec.kind = RecordKind::Covariate;
    } else if (kind == "group") {
      rec.kind = RecordKind::Group;
    } else if (kind == "tip") {
      rec.kind = RecordKind::Tip;
    } else if (kind == "full") {
      rec.kind = RecordKind::Full;
    } else {
      throw schema_error("results: unknown record kind '" + kind + "'");
    }
    rec.estimate = to_double(v.at("estimate"));
    rec.lcl = to_double(v.at("lcl"));
    rec.ucl = to_double(v.at("ucl"));
    rec.oce = to_double(v.at("oce"));
    if (v.contains("error")) {
      rec.error = v.at("error").get<std::string>();
    }
    return rec;
  };
  try {
    RunArtifact artifact;
    artifact.full = to_record(doc.at("full"));
    for (const auto& r : doc.at("records")) {
      artifact.records.push_back(to_record(r));
    }
    for (const auto& b : doc.at("balance")) {
      BalanceRecord rec;
      rec.covariate = b.at("covariate").get<std::string>();
      rec.smd_unweighted = to_double(b.at("smd_unweighted"));
      rec.smd_weighted = to_double(b.at("smd_weighted"));
      artifact.balance.push_back(std::move(rec));
    }
    artifact.input_digest = doc.at("input_digest").get<std::string>();
    artifact.version = doc.at("version").get<std::string>();
    return artifact;
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(path.string() + ": malformed results file: " +
                       e.what());
  }
}

}  // namespace obsbias
