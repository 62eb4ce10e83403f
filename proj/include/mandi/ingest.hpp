#pragma once

// Agmarknet-style CSV parsing and the canonical `mandiset` dataset file.
//
// Canonical file layout (version 1):
//
//   mandiset v1 <commodity>
//   # source <file name>          (zero or more)
//   # ingested <timestamp>
//   # records <n>
//   <market_id>\t<YYYY-MM-DD>\t<price, 2 decimals>\t<arrivals or ->
//   ...
//
// Data lines are grouped by market in series order, dates ascending. The
// record count guards against truncation.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "mandi/date.hpp"
#include "mandi/error.hpp"
#include "mandi/format.hpp"
#include "mandi/panel.hpp"

namespace mandi {

inline constexpr int kDatasetFormatVersion = 1;

struct RawRecord {
    Date date;
    std::string state;
    std::string district;
    std::string market;
    std::string commodity;
    std::string variety;
    std::optional<double> min_price;
    std::optional<double> max_price;
    double modal_price = 0.0;
    std::optional<double> arrivals;

    friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

struct ParseIssue {
    std::size_t line = 0;  // 1-based line number in the file, header is line 1
    std::string reason;
};

/// Maps logical fields to header names. Empty names mark optional columns
/// that the export does not carry.
struct CsvSchema {
    std::string date = "Arrival_Date";
    std::string state;
    std::string district;
    std::string market = "Market";
    std::string commodity = "Commodity";
    std::string variety = "Variety";
    std::string min_price = "Min_Price";
    std::string max_price = "Max_Price";
    std::string modal_price = "Modal_Price";
    std::string arrivals = "Arrivals";
    char delimiter = ',';
    /// Market id used when the export has no market column.
    std::string default_market = "unknown";

    nlohmann::json to_json() const {
        return {{"date", date},
                {"state", state},
                {"district", district},
                {"market", market},
                {"commodity", commodity},
                {"variety", variety},
                {"min_price", min_price},
                {"max_price", max_price},
                {"modal_price", modal_price},
                {"arrivals", arrivals},
                {"delimiter", std::string(1, delimiter)},
                {"default_market", default_market}};
    }

    friend bool operator==(const CsvSchema&, const CsvSchema&) = default;

    static CsvSchema from_json(const nlohmann::json& j) {
        CsvSchema s;
        if (!j.is_object()) fail(ErrorKind::InvalidConfig, "schema: expected a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            auto str = [&]() -> std::string {
                if (it->is_null()) return "";
                if (!it->is_string()) fail(ErrorKind::InvalidConfig, "schema: '" + key + "' must be a string");
                return it->get<std::string>();
            };
            if (key == "date") s.date = str();
            else if (key == "state") s.state = str();
            else if (key == "district") s.district = str();
            else if (key == "market") s.market = str();
            else if (key == "commodity") s.commodity = str();
            else if (key == "variety") s.variety = str();
            else if (key == "min_price") s.min_price = str();
            else if (key == "max_price") s.max_price = str();
            else if (key == "modal_price") s.modal_price = str();
            else if (key == "arrivals") s.arrivals = str();
            else if (key == "default_market") s.default_market = str();
            else if (key == "delimiter") {
                const auto d = str();
                if (d.size() != 1) fail(ErrorKind::InvalidConfig, "schema: delimiter must be one character");
                s.delimiter = d[0];
            } else {
                fail(ErrorKind::InvalidConfig, "schema: unknown key '" + key + "'");
            }
        }
        if (s.date.empty() || s.modal_price.empty())
            fail(ErrorKind::InvalidConfig, "schema: 'date' and 'modal_price' columns are required");
        return s;
    }
};

struct ParseResult {
    std::vector<RawRecord> records;
    std::vector<ParseIssue> issues;
    std::size_t data_rows = 0;
};

namespace detail {

/// Splits one delimited line, honouring double-quoted fields with "" escapes.
inline std::optional<std::vector<std::string>> split_fields(std::string_view line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) return std::nullopt;
    out.push_back(std::move(cur));
    for (auto& f : out) f = std::string(trim(f));
    return out;
}

inline bool is_absent_token(std::string_view s) {
    s = trim(s);
    return s.empty() || s == "-" || s == "NA" || s == "N/A" || s == "NR";
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace detail

/// Malformed rows become issues; only a missing required header column
/// rejects the whole file.
inline ParseResult parse_csv(std::string_view content, const CsvSchema& schema) {
    ParseResult result;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&](std::string_view& line) -> bool {
        if (pos >= content.size()) return false;
        const auto nl = content.find('\n', pos);
        const auto end = nl == std::string_view::npos ? content.size() : nl;
        line = content.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        ++line_no;
        return true;
    };

    std::string_view header_line;
    if (!next_line(header_line)) fail(ErrorKind::DataError, "csv: empty input, header row required");
    if (header_line.size() >= 3 && header_line.substr(0, 3) == "\xEF\xBB\xBF") header_line.remove_prefix(3);
    const auto header = detail::split_fields(header_line, schema.delimiter);
    if (!header) fail(ErrorKind::DataError, "csv: malformed header row");

    auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
        if (name.empty()) {
            if (required) fail(ErrorKind::DataError, "csv: schema lacks a required column name");
            return std::nullopt;
        }
        for (std::size_t i = 0; i < header->size(); ++i)
            if ((*header)[i] == name) return i;
        fail(ErrorKind::DataError, "csv: missing required header column '" + name + "'");
    };
    const auto c_date = column(schema.date, true);
    const auto c_modal = column(schema.modal_price, true);
    const auto c_state = column(schema.state, false);
    const auto c_district = column(schema.district, false);
    const auto c_market = column(schema.market, false);
    const auto c_commodity = column(schema.commodity, false);
    const auto c_variety = column(schema.variety, false);
    const auto c_min = column(schema.min_price, false);
    const auto c_max = column(schema.max_price, false);
    const auto c_arrivals = column(schema.arrivals, false);

    std::string_view line;
    while (next_line(line)) {
        if (trim(line).empty()) continue;
        ++result.data_rows;
        auto issue = [&](std::string reason) { result.issues.push_back({line_no, std::move(reason)}); };
        const auto fields = detail::split_fields(line, schema.delimiter);
        if (!fields) {
            issue("unterminated quote");
            continue;
        }
        if (fields->size() != header->size()) {
            issue("expected " + std::to_string(header->size()) + " fields, found " +
                  std::to_string(fields->size()));
            continue;
        }
        auto get = [&](const std::optional<std::size_t>& c) -> std::string {
            return c ? (*fields)[*c] : std::string{};
        };

        RawRecord r;
        const auto date = parse_date(get(c_date));
        if (!date) {
            issue("unparseable date '" + get(c_date) + "'");
            continue;
        }
        r.date = *date;
        const auto modal = parse_double(get(c_modal));
        if (!modal) {
            issue("non-numeric price '" + get(c_modal) + "'");
            continue;
        }
        if (!(*modal > 0.0)) {
            issue("non-positive modal price");
            continue;
        }
        r.modal_price = *modal;

        bool bad = false;
        auto optional_number = [&](const std::optional<std::size_t>& c, const char* what) -> std::optional<double> {
            if (!c || detail::is_absent_token((*fields)[*c])) return std::nullopt;
            const auto v = parse_double((*fields)[*c]);
            if (!v) {
                issue(std::string("non-numeric ") + what + " '" + (*fields)[*c] + "'");
                bad = true;
            }
            return v;
        };
        r.min_price = optional_number(c_min, "min price");
        if (bad) continue;
        r.max_price = optional_number(c_max, "max price");
        if (bad) continue;
        r.arrivals = optional_number(c_arrivals, "arrivals");
        if (bad) continue;
        if (r.arrivals && *r.arrivals < 0.0) {
            issue("negative arrivals");
            continue;
        }
        if (r.min_price && r.max_price &&
            !(*r.min_price <= r.modal_price && r.modal_price <= *r.max_price)) {
            issue("price order violated (min <= modal <= max)");
            continue;
        }

        r.state = get(c_state);
        r.district = get(c_district);
        r.market = c_market ? get(c_market) : schema.default_market;
        r.commodity = get(c_commodity);
        r.variety = get(c_variety);
        if (r.market.empty()) {
            issue("empty market");
            continue;
        }
        if (r.market.find('\t') != std::string::npos) {
            issue("market contains a tab");
            continue;
        }
        result.records.push_back(std::move(r));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Canonical dataset
// ---------------------------------------------------------------------------

struct Provenance {
    std::vector<std::string> sources;
    std::string ingested_at;
    int format_version = kDatasetFormatVersion;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct CanonicalDataset {
    std::string commodity;
    std::vector<PriceSeries> series;
    Provenance provenance;

    friend bool operator==(const CanonicalDataset&, const CanonicalDataset&) = default;

    DateRange date_span() const {
        require(!series.empty(), "dataset has no series");
        Date lo = series.front().observations.front().date;
        Date hi = lo;
        for (const auto& s : series) {
            lo = std::min(lo, s.observations.front().date);
            hi = std::max(hi, s.observations.back().date);
        }
        return {lo, hi};
    }
};

enum class DedupPolicy {
    ArrivalsWeightedMean,  // falls back to the plain mean when any arrivals are missing
    Mean,
};

inline double round_to_cents(double v) { return std::round(v * 100.0) / 100.0; }

/// Filters to `commodity` (case-insensitive), groups by market, and reduces
/// same-day records. Output is independent of record order: markets are
/// sorted by id and each day's records are reduced in a canonical order.
inline CanonicalDataset build_dataset(std::vector<RawRecord> records, const std::string& commodity,
                                      DedupPolicy dedup = DedupPolicy::ArrivalsWeightedMean) {
    const std::string want = detail::lower(trim(commodity));
    std::map<std::string, std::map<Date, std::vector<const RawRecord*>>> groups;
    for (const auto& r : records)
        if (detail::lower(trim(r.commodity)) == want) groups[r.market][r.date].push_back(&r);
    if (groups.empty()) fail(ErrorKind::DataError, "build_dataset: no records for commodity '" + commodity + "'");

    CanonicalDataset ds;
    ds.commodity = std::string(trim(commodity));
    for (auto& [market, days] : groups) {
        PriceSeries s;
        s.market_id = market;
        s.commodity = ds.commodity;
        for (auto& [date, recs] : days) {
            std::sort(recs.begin(), recs.end(), [](const RawRecord* a, const RawRecord* b) {
                return std::tuple(a->modal_price, a->arrivals.value_or(-1.0), a->variety) <
                       std::tuple(b->modal_price, b->arrivals.value_or(-1.0), b->variety);
            });
            const bool all_arrivals =
                std::all_of(recs.begin(), recs.end(), [](const RawRecord* r) { return r->arrivals.has_value(); });
            double total_arrivals = 0.0;
            bool any_arrivals = false;
            for (const auto* r : recs)
                if (r->arrivals) {
                    total_arrivals += *r->arrivals;
                    any_arrivals = true;
                }
            double price = 0.0;
            if (dedup == DedupPolicy::ArrivalsWeightedMean && all_arrivals && total_arrivals > 0.0) {
                double num = 0.0;
                for (const auto* r : recs) num += r->modal_price * *r->arrivals;
                price = num / total_arrivals;
            } else {
                double sum = 0.0;
                for (const auto* r : recs) sum += r->modal_price;
                price = sum / static_cast<double>(recs.size());
            }
            PriceObservation o;
            o.date = date;
            o.price = round_to_cents(price);
            if (any_arrivals) o.arrivals = total_arrivals;
            s.observations.push_back(o);
        }
        ds.series.push_back(std::move(s));
    }
    return ds;
}

inline std::string serialize_dataset(const CanonicalDataset& ds) {
    if (ds.commodity.empty() || ds.commodity.find_first_of("\t\n") != std::string::npos)
        fail(ErrorKind::InvalidArgument, "save_dataset: invalid commodity name");
    std::size_t n = 0;
    for (const auto& s : ds.series) {
        if (s.observations.empty())
            fail(ErrorKind::InvalidArgument, "save_dataset: series '" + s.market_id + "' is empty");
        if (s.market_id.empty() || s.market_id.find_first_of("\t\n") != std::string::npos)
            fail(ErrorKind::InvalidArgument, "save_dataset: invalid market id '" + s.market_id + "'");
        n += s.observations.size();
    }
    std::ostringstream out;
    out << "mandiset v" << kDatasetFormatVersion << ' ' << ds.commodity << '\n';
    for (const auto& src : ds.provenance.sources) out << "# source " << src << '\n';
    out << "# ingested " << ds.provenance.ingested_at << '\n';
    out << "# records " << n << '\n';
    for (const auto& s : ds.series) {
        for (const auto& o : s.observations) {
            out << s.market_id << '\t' << format_date(o.date) << '\t' << format_fixed(o.price, 2) << '\t'
                << (o.arrivals ? format_shortest(*o.arrivals) : std::string("-")) << '\n';
        }
    }
    return out.str();
}

inline CanonicalDataset parse_dataset(std::string_view text) {
    auto bad = [](const std::string& what) { fail(ErrorKind::DataError, "load_dataset: " + what); };
    if (text.empty()) bad("empty file");
    if (text.back() != '\n') bad("truncated file (no trailing newline)");

    std::vector<std::string_view> lines;
    for (std::size_t pos = 0; pos < text.size();) {
        const auto nl = text.find('\n', pos);
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }

    CanonicalDataset ds;
    {
        const std::string_view h = lines.front();
        constexpr std::string_view magic = "mandiset v";
        if (h.substr(0, magic.size()) != magic) bad("missing 'mandiset' header");
        const auto sp = h.find(' ', magic.size());
        const auto version = parse_int<int>(h.substr(magic.size(), sp == std::string_view::npos ? h.npos : sp - magic.size()));
        if (!version) bad("unparseable format version");
        if (*version != kDatasetFormatVersion)
            fail(ErrorKind::VersionMismatch, "load_dataset: format version " + std::to_string(*version) +
                                                 " does not match supported version " +
                                                 std::to_string(kDatasetFormatVersion));
        if (sp == std::string_view::npos || sp + 1 >= h.size()) bad("missing commodity in header");
        ds.commodity = std::string(h.substr(sp + 1));
        ds.provenance.format_version = *version;
    }

    std::optional<std::size_t> declared;
    std::size_t count = 0;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string_view line = lines[i];
        if (line.empty()) bad("blank line " + std::to_string(i + 1));
        if (line.front() == '#') {
            if (line.rfind("# source ", 0) == 0) ds.provenance.sources.emplace_back(line.substr(9));
            else if (line.rfind("# ingested ", 0) == 0) ds.provenance.ingested_at = std::string(line.substr(11));
            else if (line.rfind("# records ", 0) == 0) declared = parse_int<std::size_t>(line.substr(10));
            continue;
        }
        std::string_view f[4];
        std::size_t pos = 0;
        for (int k = 0; k < 4; ++k) {
            const auto tab = line.find('\t', pos);
            if ((k < 3) == (tab == std::string_view::npos)) bad("malformed data line " + std::to_string(i + 1));
            f[k] = line.substr(pos, tab == std::string_view::npos ? line.npos : tab - pos);
            pos = tab + 1;
        }
        const auto date = parse_date(f[1]);
        const auto price = parse_double(f[2]);
        if (f[0].empty() || !date || !price || !(*price > 0.0)) bad("malformed data line " + std::to_string(i + 1));
        PriceObservation o;
        o.date = *date;
        o.price = *price;
        if (f[3] != "-") {
            const auto a = parse_double(f[3]);
            if (!a || *a < 0.0) bad("malformed arrivals on line " + std::to_string(i + 1));
            o.arrivals = *a;
        }
        const std::string market(f[0]);
        auto [it, inserted] = index.try_emplace(market, ds.series.size());
        if (inserted) {
            PriceSeries s;
            s.market_id = market;
            s.commodity = ds.commodity;
            ds.series.push_back(std::move(s));
        } else if (it->second + 1 != ds.series.size()) {
            bad("market '" + market + "' lines are not contiguous");
        }
        auto& obs = ds.series[it->second].observations;
        if (!obs.empty() && !(obs.back().date < o.date)) bad("dates not increasing on line " + std::to_string(i + 1));
        obs.push_back(o);
        ++count;
    }
    if (!declared) bad("missing '# records' line");
    if (*declared != count)
        bad("truncated file: header declares " + std::to_string(*declared) + " records, found " +
            std::to_string(count));
    if (ds.series.empty()) bad("no records");
    return ds;
}

inline void save_dataset(const CanonicalDataset& ds, const std::string& path) {
    const auto text = serialize_dataset(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write dataset '" + path + "'");
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

inline CanonicalDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingInput, "cannot open dataset '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

}  // namespace mandi
