#pragma once

// JSON documents for every result type, plus the run manifest that makes a
// command reproducible. The layout is described by docs/report.schema.json.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tobit/bounds.hpp"
#include "tobit/data.hpp"
#include "tobit/estimate.hpp"
#include "tobit/momtest.hpp"
#include "tobit/montecarlo.hpp"

namespace tobit::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1.0";

struct InputDigest {
    std::string path;
    std::string sha256;
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;
};

struct RunManifest {
    std::string subcommand;
    std::string tool_version = TOBIT_VERSION;
    std::string timestamp;  // UTC, ISO 8601
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<InputDigest> inputs;
    Json options = Json::object();  // every resolved option
    std::vector<std::string> command_line;
};

// Hex SHA-256 of a file's bytes. Throws InputError when unreadable.
std::string sha256_file(const std::string& path);
std::string utc_timestamp();

// "***" below 1%, "**" below 5%, "*" below 10% (two-sided normal p-value).
std::string stars(double estimate, double se);
double p_value(double estimate, double se);

Json to_json(const RunManifest& m);
Json to_json(const data::SampleSummary& s);
Json to_json(const estimate::ClassicTobitFit& fit);
Json to_json(const estimate::IvTobitFit& fit);
Json to_json(const momtest::TestRun& run);
Json to_json(const bounds::MtsBound& b);
Json to_json(const montecarlo::StudyReport& r);

// {"schema_version", "kind", "manifest", "result"}
Json envelope(const std::string& kind, const RunManifest& m, Json result);

// Plain-text coefficient tables with significance stars.
std::string format_fit(const estimate::ClassicTobitFit& fit);
std::string format_fit(const estimate::IvTobitFit& fit);

}  // namespace tobit::report
