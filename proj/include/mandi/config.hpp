#pragma once

// Run configuration shared by every CLI command. JSON in, JSON out; unknown
// keys are errors so typos never silently fall back to defaults.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mandi/date.hpp"
#include "mandi/error.hpp"
#include "mandi/ingest.hpp"
#include "mandi/model.hpp"
#include "mandi/synth.hpp"
#include "mandi/window.hpp"

namespace mandi {

struct ExplainConfig {
    std::string market;      // empty: first market
    std::string anchor;      // empty: last calendar day of the dataset
    std::size_t horizon = 1; // 1-based day ahead
    std::size_t top_k = 5;

    friend bool operator==(const ExplainConfig&, const ExplainConfig&) = default;
};

struct RunConfig {
    std::string commodity = "Onion";
    std::vector<std::string> inputs;   // CSV exports for ingest
    CsvSchema schema;
    DedupPolicy dedup = DedupPolicy::ArrivalsWeightedMean;
    std::string ingested_at;           // provenance stamp; empty: newest input modification time
    std::string dataset;               // empty: <output_dir>/dataset.tsv
    std::string model;                 // empty: <output_dir>/model.mdl
    std::string output_dir = "mandi_out";
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    WindowConfig window;
    bool cyclic_doy = false;
    bool refit_with_validation = false;
    SplitSpec split{make_date(2013, 12, 31), make_date(2014, 12, 31), make_date(2015, 12, 31)};
    double alpha = 1.0;
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::size_t> b_grid{7};
    std::vector<ModelSpec> models{{Family::Stay, {}, 0}, {Family::GradBoost, {{"rounds", 30}}, 0}};
    SynthConfig synth;
    ExplainConfig explain;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    std::filesystem::path dataset_path() const {
        return dataset.empty() ? std::filesystem::path(output_dir) / "dataset.tsv" : std::filesystem::path(dataset);
    }
    std::filesystem::path model_path() const {
        return model.empty() ? std::filesystem::path(output_dir) / "model.mdl" : std::filesystem::path(model);
    }
    WindowConfig window_config() const {
        WindowConfig w = window;
        w.doy = cyclic_doy ? DoyEncoding::Cyclic : DoyEncoding::Raw;
        return w;
    }
    /// Model specs with the run seed applied.
    std::vector<ModelSpec> seeded_models() const {
        auto out = models;
        for (auto& m : out) m.seed = seed;
        return out;
    }

    void validate() const {
        auto bad = [](const std::string& m) { fail(ErrorKind::InvalidConfig, "config: " + m); };
        if (commodity.empty()) bad("commodity must not be empty");
        if (output_dir.empty()) bad("output_dir must not be empty");
        if (workers == 0) bad("workers must be >= 1");
        if (window.b == 0 || window.f == 0) bad("window.b and window.f must be >= 1");
        if (!(window.epsilon >= 0.0)) bad("window.epsilon must be non-negative");
        if (!(split.train_end < split.val_end && split.val_end < split.test_end))
            bad("split requires train_end < val_end < test_end");
        if (!(alpha >= 0.0 && alpha <= 1.0)) bad("alpha must be in [0, 1]");
        if (alphas.empty()) bad("alphas must not be empty");
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) bad("alphas must lie in [0, 1]");
            if (i > 0 && !(alphas[i - 1] < alphas[i])) bad("alphas must be strictly increasing");
        }
        if (b_grid.empty()) bad("b_grid must not be empty");
        for (auto b : b_grid)
            if (b == 0) bad("b_grid entries must be >= 1");
        if (models.empty()) bad("models must not be empty");
        for (const auto& m : models) (void)m.resolved();
        if (explain.horizon == 0) bad("explain.horizon is 1-based and must be >= 1");
        if (explain.top_k == 0) bad("explain.top_k must be >= 1");
        if (!explain.anchor.empty() && !parse_date(explain.anchor)) bad("explain.anchor is not a valid date");
        synth.validate();
    }
};

namespace detail {

class JsonObject {
public:
    JsonObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) fail(ErrorKind::InvalidConfig, "config: " + where_ + " must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) unseen_.insert(it.key());
    }

    const nlohmann::json* get(const std::string& key) {
        unseen_.erase(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        const auto* v = get(key);
        if (!v) return;
        try {
            out = v->get<T>();
        } catch (const nlohmann::json::exception&) {
            fail(ErrorKind::InvalidConfig, "config: " + path(key) + " has the wrong type");
        }
    }

    void read_size(const std::string& key, std::size_t& out) {
        const auto* v = get(key);
        if (!v) return;
        if (!v->is_number_unsigned()) fail(ErrorKind::InvalidConfig, "config: " + path(key) + " must be a non-negative integer");
        out = v->get<std::size_t>();
    }

    void read_date(const std::string& key, Date& out) {
        std::string s;
        read(key, s);
        if (!get_seen(key)) return;
        const auto d = parse_date(s);
        if (!d) fail(ErrorKind::InvalidConfig, "config: " + path(key) + " is not a valid date");
        out = *d;
    }

    void finish() const {
        if (!unseen_.empty()) fail(ErrorKind::InvalidConfig, "config: unknown key '" + path(*unseen_.begin()) + "'");
    }

    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

private:
    bool get_seen(const std::string& key) const { return j_.contains(key); }

    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> unseen_;
};

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    using nlohmann::json;
    json models = json::array();
    for (const auto& m : c.models) {
        json hp = json::object();
        for (const auto& [k, v] : m.hyperparams) hp[k] = v;
        models.push_back({{"family", to_string(m.family)}, {"hyperparams", hp}});
    }
    json availability = json::array();
    for (const auto& a : c.synth.availability) {
        if (a) availability.push_back({{"start", format_date(a->first)}, {"end", format_date(a->last)}});
        else availability.push_back(nullptr);
    }
    return {
        {"commodity", c.commodity},
        {"inputs", c.inputs},
        {"schema", c.schema.to_json()},
        {"dedup", c.dedup == DedupPolicy::Mean ? "mean" : "arrivals_weighted_mean"},
        {"ingested_at", c.ingested_at},
        {"dataset", c.dataset},
        {"model", c.model},
        {"output_dir", c.output_dir},
        {"seed", c.seed},
        {"workers", c.workers},
        {"window", {{"b", c.window.b}, {"f", c.window.f}, {"epsilon", c.window.epsilon}}},
        {"cyclic_doy", c.cyclic_doy},
        {"refit_with_validation", c.refit_with_validation},
        {"split",
         {{"train_end", format_date(c.split.train_end)},
          {"val_end", format_date(c.split.val_end)},
          {"test_end", format_date(c.split.test_end)}}},
        {"alpha", c.alpha},
        {"alphas", c.alphas},
        {"b_grid", c.b_grid},
        {"models", models},
        {"synth",
         {{"markets", c.synth.markets},
          {"years", c.synth.years},
          {"start_year", c.synth.start_year},
          {"base_price", c.synth.base_price},
          {"season_amplitude", c.synth.season_amplitude},
          {"peak_day_of_year", c.synth.peak_day_of_year},
          {"phase_jitter_days", c.synth.phase_jitter_days},
          {"stickiness", c.synth.stickiness},
          {"noise_scale", c.synth.noise_scale},
          {"ar_coefficient", c.synth.ar_coefficient},
          {"availability", availability},
          {"random_missing", c.synth.random_missing},
          {"block_missing", {{"mean_length", c.synth.block_missing.mean_length}, {"rate", c.synth.block_missing.rate}}}}},
        {"explain",
         {{"market", c.explain.market},
          {"anchor", c.explain.anchor},
          {"horizon", c.explain.horizon},
          {"top_k", c.explain.top_k}}},
    };
}

/// Overlays `j` on the defaults (or on `base`) and validates the result.
inline RunConfig config_from_json(const nlohmann::json& j, RunConfig c = {}) {
    detail::JsonObject o(j, "");
    o.read("commodity", c.commodity);
    o.read("inputs", c.inputs);
    if (const auto* s = o.get("schema")) c.schema = CsvSchema::from_json(*s);
    {
        std::string d = c.dedup == DedupPolicy::Mean ? "mean" : "arrivals_weighted_mean";
        o.read("dedup", d);
        if (d == "mean") c.dedup = DedupPolicy::Mean;
        else if (d == "arrivals_weighted_mean") c.dedup = DedupPolicy::ArrivalsWeightedMean;
        else fail(ErrorKind::InvalidConfig, "config: dedup must be 'arrivals_weighted_mean' or 'mean'");
    }
    o.read("ingested_at", c.ingested_at);
    o.read("dataset", c.dataset);
    o.read("model", c.model);
    o.read("output_dir", c.output_dir);
    if (const auto* v = o.get("seed")) {
        if (!v->is_number_unsigned()) fail(ErrorKind::InvalidConfig, "config: seed must be a non-negative integer");
        c.seed = v->get<std::uint64_t>();
    }
    o.read_size("workers", c.workers);
    if (const auto* w = o.get("window")) {
        detail::JsonObject wo(*w, "window");
        wo.read_size("b", c.window.b);
        wo.read_size("f", c.window.f);
        wo.read("epsilon", c.window.epsilon);
        wo.finish();
    }
    o.read("cyclic_doy", c.cyclic_doy);
    o.read("refit_with_validation", c.refit_with_validation);
    if (const auto* s = o.get("split")) {
        detail::JsonObject so(*s, "split");
        so.read_date("train_end", c.split.train_end);
        so.read_date("val_end", c.split.val_end);
        so.read_date("test_end", c.split.test_end);
        so.finish();
    }
    o.read("alpha", c.alpha);
    o.read("alphas", c.alphas);
    if (const auto* v = o.get("b_grid")) {
        if (!v->is_array()) fail(ErrorKind::InvalidConfig, "config: b_grid must be an array");
        c.b_grid.clear();
        for (const auto& e : *v) {
            if (!e.is_number_unsigned()) fail(ErrorKind::InvalidConfig, "config: b_grid entries must be integers");
            c.b_grid.push_back(e.get<std::size_t>());
        }
    }
    if (const auto* v = o.get("models")) {
        if (!v->is_array()) fail(ErrorKind::InvalidConfig, "config: models must be an array");
        c.models.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
            detail::JsonObject mo((*v)[i], "models[" + std::to_string(i) + "]");
            std::string fam;
            mo.read("family", fam);
            const auto f = parse_family(fam);
            if (!f) fail(ErrorKind::InvalidConfig, "config: unknown model family '" + fam + "'");
            ModelSpec spec{*f, {}, 0};
            if (const auto* hp = mo.get("hyperparams")) {
                if (!hp->is_object()) fail(ErrorKind::InvalidConfig, "config: hyperparams must be an object");
                for (auto it = hp->begin(); it != hp->end(); ++it) {
                    if (!it->is_number())
                        fail(ErrorKind::InvalidConfig, "config: hyperparameter '" + it.key() + "' must be a number");
                    spec.hyperparams[it.key()] = it->get<double>();
                }
            }
            mo.finish();
            c.models.push_back(std::move(spec));
        }
    }
    if (const auto* s = o.get("synth")) {
        detail::JsonObject so(*s, "synth");
        so.read_size("markets", c.synth.markets);
        so.read_size("years", c.synth.years);
        so.read("start_year", c.synth.start_year);
        so.read("base_price", c.synth.base_price);
        so.read("season_amplitude", c.synth.season_amplitude);
        so.read("peak_day_of_year", c.synth.peak_day_of_year);
        so.read("phase_jitter_days", c.synth.phase_jitter_days);
        so.read("stickiness", c.synth.stickiness);
        so.read("noise_scale", c.synth.noise_scale);
        so.read("ar_coefficient", c.synth.ar_coefficient);
        so.read("random_missing", c.synth.random_missing);
        if (const auto* a = so.get("availability")) {
            if (!a->is_array()) fail(ErrorKind::InvalidConfig, "config: synth.availability must be an array");
            c.synth.availability.clear();
            for (const auto& e : *a) {
                if (e.is_null()) {
                    c.synth.availability.emplace_back();
                    continue;
                }
                detail::JsonObject ao(e, "synth.availability[]");
                DateRange r{};
                ao.read_date("start", r.first);
                ao.read_date("end", r.last);
                ao.finish();
                c.synth.availability.emplace_back(r);
            }
        }
        if (const auto* b = so.get("block_missing")) {
            detail::JsonObject bo(*b, "synth.block_missing");
            bo.read("mean_length", c.synth.block_missing.mean_length);
            bo.read("rate", c.synth.block_missing.rate);
            bo.finish();
        }
        so.finish();
    }
    if (const auto* e = o.get("explain")) {
        detail::JsonObject eo(*e, "explain");
        eo.read("market", c.explain.market);
        eo.read("anchor", c.explain.anchor);
        eo.read_size("horizon", c.explain.horizon);
        eo.read_size("top_k", c.explain.top_k);
        eo.finish();
    }
    o.finish();
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::MissingInput, "cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidConfig, "config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace mandi
