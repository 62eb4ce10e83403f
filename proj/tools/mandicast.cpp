// mandicast: command-line driver for the forecasting pipeline.
//
//   mandicast [--config run.json] [--out-dir DIR] [--workers N] <command> [options]
//
// Every command reads one RunConfig (JSON file, overlaid by flags) and
// writes its artifacts under the output directory.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mandi/config.hpp"
#include "mandi/curve.hpp"
#include "mandi/evaluation.hpp"
#include "mandi/ingest.hpp"
#include "mandi/model_io.hpp"
#include "mandi/report.hpp"
#include "mandi/synth.hpp"

namespace fs = std::filesystem;
using namespace mandi;

namespace {

constexpr const char* kExitCodes = R"(Exit codes:
  0  success
  1  unexpected internal error
  2  invalid usage or configuration (bad flag, unknown config key, bad value)
  3  missing input (dataset, model, config or CSV file not found)
  4  version mismatch (dataset or model file format)
  5  feature-layout mismatch between a model and the data it is applied to
  6  data error (no usable records, empty split, no observed targets)
  7  I/O error (output not writable)
Errors are printed as one line on stderr:
  error: code=<name> exit=<n> msg="<text>"
Environment:
  MANDI_OUT_DIR  overrides output_dir from the config file (the --out-dir flag wins over both))";

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::InvalidConfig: return 2;
        case ErrorKind::MissingInput: return 3;
        case ErrorKind::VersionMismatch: return 4;
        case ErrorKind::LayoutMismatch: return 5;
        case ErrorKind::DataError: return 6;
        case ErrorKind::Io: return 7;
    }
    return 1;
}

int report_error(const std::string& code, int exit, std::string msg) {
    for (auto& c : msg)
        if (c == '\n' || c == '\r') c = ' ';
    std::string escaped;
    for (char c : msg) {
        if (c == '"' || c == '\\') escaped += '\\';
        escaped += c;
    }
    std::cerr << "error: code=" << code << " exit=" << exit << " msg=\"" << escaped << "\"\n";
    return exit;
}

struct Overrides {
    std::string config_path;
    bool dump_config = false;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<std::string> dataset;
    std::optional<std::string> model;
    std::optional<std::string> commodity;
    bool cyclic_doy = false;
    bool refit_with_validation = false;
    // ingest
    std::vector<std::string> inputs;
    std::optional<std::string> schema_path;
    std::optional<std::string> timestamp;
    // evaluate
    std::string part = "test";
    // explain
    std::optional<std::string> market;
    std::optional<std::string> anchor;
    std::optional<std::size_t> horizon;
    std::optional<std::size_t> top_k;
};

RunConfig resolve_config(const Overrides& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (const char* env = std::getenv("MANDI_OUT_DIR"); env && *env) cfg.output_dir = env;
    if (o.out_dir) cfg.output_dir = *o.out_dir;
    if (o.workers) cfg.workers = *o.workers;
    if (o.seed) cfg.seed = *o.seed;
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.dataset) cfg.dataset = *o.dataset;
    if (o.model) cfg.model = *o.model;
    if (o.commodity) cfg.commodity = *o.commodity;
    if (o.cyclic_doy) cfg.cyclic_doy = true;
    if (o.refit_with_validation) cfg.refit_with_validation = true;
    if (!o.inputs.empty()) cfg.inputs = o.inputs;
    if (o.timestamp) cfg.ingested_at = *o.timestamp;
    if (o.market) cfg.explain.market = *o.market;
    if (o.anchor) cfg.explain.anchor = *o.anchor;
    if (o.horizon) cfg.explain.horizon = *o.horizon;
    if (o.top_k) cfg.explain.top_k = *o.top_k;
    cfg.validate();
    return cfg;
}

fs::path ensure_out_dir(const RunConfig& cfg) {
    const fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create output directory '" + dir.string() + "'");
    return dir;
}

void ensure_parent(const fs::path& p) {
    if (!p.has_parent_path()) return;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) fail(ErrorKind::Io, "cannot create directory '" + p.parent_path().string() + "'");
}

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingInput, std::string("cannot open ") + what + " '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string utc_stamp(fs::file_time_type t) {
    const auto sys = std::chrono::file_clock::to_sys(t);
    const auto secs = std::chrono::floor<std::chrono::seconds>(sys);
    const auto day = std::chrono::floor<std::chrono::days>(secs);
    const std::chrono::hh_mm_ss hms{secs - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(Date{day}).c_str(),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

AlignedPanel load_panel(const RunConfig& cfg, double epsilon) {
    const auto ds = load_dataset(cfg.dataset_path().string());
    if (detail::lower(ds.commodity) != detail::lower(cfg.commodity))
        fail(ErrorKind::DataError,
             "dataset commodity '" + ds.commodity + "' does not match configured '" + cfg.commodity + "'");
    if (ds.series.empty()) fail(ErrorKind::DataError, "dataset has no series");
    return align(ds.series, ds.date_span(), epsilon);
}

void check_markets(const TrainedModel& model, const AlignedPanel& panel) {
    if (model.market_ids != panel.market_ids())
        fail(ErrorKind::LayoutMismatch, "dataset markets differ from the markets the model was trained on");
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& cfg, const Overrides& o) {
    if (cfg.inputs.empty()) fail(ErrorKind::InvalidConfig, "ingest: no input files (pass paths or set 'inputs')");
    CsvSchema schema = cfg.schema;
    if (o.schema_path) {
        const auto text = read_file(*o.schema_path, "schema");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::InvalidConfig, "schema '" + *o.schema_path + "' is not valid JSON: " + e.what());
        }
        schema = CsvSchema::from_json(j);
    }
    std::vector<RawRecord> records;
    ReportWriter w;
    w.kv("report", std::string("ingest"));
    w.kv("commodity", cfg.commodity);
    std::optional<fs::file_time_type> newest;
    for (const auto& path : cfg.inputs) {
        const auto text = read_file(path, "input");
        const auto mtime = fs::last_write_time(path);
        if (!newest || mtime > *newest) newest = mtime;
        auto parsed = parse_csv(text, schema);
        w.line("");
        w.kv("source", path);
        w.kv("data_rows", parsed.data_rows);
        w.kv("records", parsed.records.size());
        w.kv("issues", parsed.issues.size());
        for (const auto& issue : parsed.issues) w.line("issue: line " + std::to_string(issue.line) + ": " + issue.reason);
        records.insert(records.end(), std::make_move_iterator(parsed.records.begin()),
                       std::make_move_iterator(parsed.records.end()));
    }
    auto ds = build_dataset(std::move(records), cfg.commodity, cfg.dedup);
    ds.provenance.sources = cfg.inputs;
    ds.provenance.ingested_at = cfg.ingested_at.empty() ? utc_stamp(*newest) : cfg.ingested_at;
    const auto out = ensure_out_dir(cfg);
    const auto path = cfg.dataset_path();
    ensure_parent(path);
    save_dataset(ds, path.string());
    std::size_t obs = 0;
    for (const auto& s : ds.series) obs += s.observations.size();
    w.line("");
    w.kv("dataset", path.string());
    w.kv("markets", ds.series.size());
    w.kv("observations", obs);
    write_text_file(out / "ingest_report.txt", w.text());
    std::cout << "ingest: " << ds.series.size() << " markets, " << obs << " observations -> " << path.string() << '\n';
    return 0;
}

int cmd_synth(const RunConfig& cfg) {
    SynthConfig sc = cfg.synth;
    sc.seed = cfg.seed;
    const auto res = generate(sc);
    auto ds = to_dataset(res.panel, cfg.commodity);
    if (ds.series.empty()) fail(ErrorKind::DataError, "synth: every market is fully unobserved");
    ds.provenance.sources = {"synthetic seed=" + std::to_string(sc.seed)};
    ds.provenance.ingested_at = "synthetic";
    const auto out = ensure_out_dir(cfg);
    const auto path = cfg.dataset_path();
    ensure_parent(path);
    save_dataset(ds, path.string());

    const auto ref = reference_accuracy(sc, 1);
    ReportWriter w;
    w.kv("report", std::string("synth"));
    w.kv("seed", std::to_string(sc.seed));
    w.kv("markets", sc.markets);
    w.kv("calendar", format_date(sc.calendar().first) + ".." + format_date(sc.calendar().last));
    w.kv("stickiness", sc.stickiness);
    w.kv("season_amplitude", sc.season_amplitude);
    w.kv("noise_scale", sc.noise_scale);
    w.kv("expected_missing_fraction", expected_missing_fraction(sc));
    for (std::size_t m = 0; m < res.panel.markets(); ++m)
        w.kv("missing_fraction_" + res.panel.market_ids()[m],
             missing_fraction(res.panel, res.panel.market_ids()[m], res.panel.calendar()));
    w.kv("stay_prevalence", ref.stay_prevalence);
    w.kv("reference_raw", ref.raw_ref);
    w.kv("reference_balanced", ref.balanced_ref);
    w.kv("dataset", path.string());
    write_text_file(out / "synth_report.txt", w.text());
    std::cout << "synth: " << ds.series.size() << " markets -> " << path.string() << '\n';
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const auto window = cfg.window_config();
    const auto panel = load_panel(cfg, window.epsilon);
    const auto out = ensure_out_dir(cfg);
    WindowCache cache(panel, window, cfg.split);
    const auto specs = cfg.seeded_models();
    SelectionOptions opt{cfg.workers, cfg.refit_with_validation};
    auto tuned = tune(specs, cfg.b_grid, cache, cfg.alpha, opt);
    TrainedModel model = std::move(tuned.model);
    if (cfg.refit_with_validation) {
        const auto& parts = cache.get(tuned.b);
        std::vector<WindowExample> both = parts.train;
        both.insert(both.end(), parts.val.begin(), parts.val.end());
        TrainOptions to{cache.window(tuned.b), panel.market_ids(), cfg.workers, true};
        model = train(tuned.spec, both, cfg.alpha, to);
    }
    const auto path = cfg.model_path();
    ensure_parent(path);
    save_model(model, path.string());

    ReportWriter w;
    w.kv("report", std::string("train"));
    w.kv("alpha", cfg.alpha);
    write_split(w, cfg.split);
    w.kv("refit_with_validation", std::string(cfg.refit_with_validation ? "true" : "false"));
    w.kv("selected_spec", tuned.spec.canonical());
    w.kv("selected_spec_digest", tuned.spec.digest());
    w.kv("selected_b", tuned.b);
    w.kv("layout", model.layout);
    w.kv("train_examples", cache.get(tuned.b).train.size());
    std::size_t degenerate = 0;
    for (const auto& o : model.outputs) degenerate += o.degeneracy != Degeneracy::None;
    w.kv("degenerate_outputs", degenerate);
    for (const auto& c : tuned.candidates) {
        w.line("");
        w.kv("candidate_spec", specs[c.spec_index].canonical());
        w.kv("candidate_b", c.b);
        w.kv("candidate_objective", c.objective);
        write_metrics(w, "val_", c.validation);
    }
    w.line("");
    w.kv("model", path.string());
    write_text_file(out / "train_report.txt", w.text());
    std::cout << "train: " << tuned.spec.canonical() << " b=" << tuned.b << " -> " << path.string() << '\n';
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const Overrides& o) {
    const auto model = load_model(cfg.model_path().string());
    const auto panel = load_panel(cfg, model.window.epsilon);
    check_markets(model, panel);
    const auto out = ensure_out_dir(cfg);
    auto parts = split(build_examples(panel, model.window), cfg.split);
    const std::vector<WindowExample>* set = nullptr;
    if (o.part == "train") set = &parts.train;
    else if (o.part == "val") set = &parts.val;
    else if (o.part == "test") set = &parts.test;
    else fail(ErrorKind::InvalidArgument, "evaluate: --split must be train, val or test");
    if (set->empty()) fail(ErrorKind::DataError, "evaluate: the " + o.part + " split has no examples");
    auto report = evaluate(model, *set, cfg.workers);
    report.split = cfg.split;
    const auto text = format_eval_report(report, o.part, model.spec, model.window, set->size());
    write_text_file(out / "eval_report.txt", text);
    std::cout << text;
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    const auto window = cfg.window_config();
    const auto panel = load_panel(cfg, window.epsilon);
    const auto out = ensure_out_dir(cfg);
    WindowCache cache(panel, window, cfg.split);
    const auto specs = cfg.seeded_models();
    const auto points =
        alpha_sweep(cfg.alphas, specs, cfg.b_grid, cache, SelectionOptions{cfg.workers, cfg.refit_with_validation});
    const auto files = emit_curve(points, out);
    write_text_file(out / "sweep_report.txt", format_sweep_report(points, cfg.split, cfg.refit_with_validation));
    std::cout << curve_csv(points);
    std::cout << "sweep: " << points.size() << " points -> " << files.csv.string() << ", " << files.svg.string()
              << '\n';
    return 0;
}

int cmd_explain(const RunConfig& cfg) {
    const auto model = load_model(cfg.model_path().string());
    const auto panel = load_panel(cfg, model.window.epsilon);
    check_markets(model, panel);
    const auto out = ensure_out_dir(cfg);

    const Date anchor = cfg.explain.anchor.empty() ? panel.calendar().last : *parse_date(cfg.explain.anchor);
    std::size_t m = 0;
    if (!cfg.explain.market.empty()) {
        const auto idx = panel.market_index(cfg.explain.market);
        if (!idx) fail(ErrorKind::InvalidArgument, "explain: unknown market '" + cfg.explain.market + "'");
        m = *idx;
    }
    const std::size_t k = cfg.explain.horizon - 1;
    if (k >= model.window.f)
        fail(ErrorKind::InvalidArgument, "explain: horizon must be between 1 and " + std::to_string(model.window.f));
    const auto fv = inference_features(panel, anchor, model.window);
    const auto forecast = predict(model, fv);
    const auto items = explain(model, fv, m, k, cfg.explain.top_k);
    const auto& fo = forecast.at(m, k);
    const auto days = [](std::size_t n) { return std::chrono::days{static_cast<int>(n)}; };

    ReportWriter w;
    w.kv("report", std::string("explanation"));
    w.kv("family", std::string(to_string(model.spec.family)));
    w.kv("spec_digest", model.spec.digest());
    w.kv("market", model.market_ids[m]);
    w.kv("query_anchor", format_date(anchor));
    w.kv("horizon", cfg.explain.horizon);
    w.kv("target_date", format_date(anchor + days(k + 1)));
    w.kv("forecast", std::string(to_string(fo.label)));
    w.kv("scores", "up=" + format_fixed(fo.scores[0], 6) + " down=" + format_fixed(fo.scores[1], 6) +
                       " stay=" + format_fixed(fo.scores[2], 6));
    w.kv("neighbours", items.size());
    w.line("rank\tmarket\twindow_start\twindow_end\ttarget_date\toutcome\tsimilarity");
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        w.line(std::to_string(i + 1) + '\t' + model.market_ids[m] + '\t' +
               format_date(it.anchor - days(model.window.b - 1)) + '\t' + format_date(it.anchor) + '\t' +
               format_date(it.anchor + days(k + 1)) + '\t' + to_string(it.outcome) + '\t' +
               format_fixed(it.similarity, 6));
    }
    write_text_file(out / "explain.txt", w.text());
    std::cout << w.text();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mandicast: multi-market produce price direction forecasting"};
    app.footer(kExitCodes);
    app.require_subcommand(0, 1);
    app.fallthrough();
    Overrides o;
    app.add_option("--config", o.config_path, "Run configuration (JSON)");
    app.add_flag("--dump-config", o.dump_config, "Print the resolved configuration as JSON and exit");
    app.add_option("--out-dir", o.out_dir, "Output directory (overrides config and MANDI_OUT_DIR)");
    app.add_option("--workers", o.workers, "Worker threads; results are identical for any value")
        ->check(CLI::PositiveNumber);
    app.add_option("--seed", o.seed, "Seed for synthetic data and model randomness");
    app.add_option("--alpha", o.alpha, "Raw/balanced tradeoff used by train, in [0, 1]");
    app.add_option("--dataset", o.dataset, "Canonical dataset path (default <out-dir>/dataset.tsv)");
    app.add_option("--model", o.model, "Model container path (default <out-dir>/model.mdl)");
    app.add_option("--commodity", o.commodity, "Commodity name");
    app.add_flag("--cyclic-doy", o.cyclic_doy, "Encode day of year as sin/cos instead of raw ordinals");
    app.add_flag("--refit-with-validation", o.refit_with_validation,
                 "Retrain the selected model on train + validation before testing");

    auto* ingest = app.add_subcommand("ingest", "Parse CSV exports into the canonical dataset");
    ingest->add_option("inputs", o.inputs, "CSV files (default: 'inputs' from the config)");
    ingest->add_option("--schema", o.schema_path, "Column-name map (JSON)");
    ingest->add_option("--out", o.dataset, "Dataset path to write");
    ingest->add_option("--timestamp", o.timestamp, "Provenance stamp (default: newest input modification time)");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic panel and write it as a dataset");
    auto* train_cmd = app.add_subcommand("train", "Select and train a model bank, write the model container");
    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a saved model on one split");
    eval_cmd->add_option("--split", o.part, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    auto* sweep = app.add_subcommand("sweep", "Alpha sweep: tune, test, and write curve.csv / curve.svg");
    auto* explain_cmd = app.add_subcommand("explain", "List the most similar past windows behind a forecast");
    explain_cmd->add_option("--market", o.market, "Market id (default: first market)");
    explain_cmd->add_option("--anchor", o.anchor, "Forecast anchor date (default: last dataset day)");
    explain_cmd->add_option("--horizon", o.horizon, "Day ahead, 1-based")->check(CLI::PositiveNumber);
    explain_cmd->add_option("--top-k", o.top_k, "Number of neighbours to list")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", 2, e.what());
    }

    try {
        const RunConfig cfg = resolve_config(o);
        if (o.dump_config) {
            std::cout << to_json(cfg).dump(2) << '\n';
            return 0;
        }
        if (*ingest) return cmd_ingest(cfg, o);
        if (*synth) return cmd_synth(cfg);
        if (*train_cmd) return cmd_train(cfg);
        if (*eval_cmd) return cmd_evaluate(cfg, o);
        if (*sweep) return cmd_sweep(cfg);
        if (*explain_cmd) return cmd_explain(cfg);
        std::cout << app.help();
        return 2;
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), exit_code(e.kind()), e.what());
    } catch (const std::exception& e) {
        return report_error("internal", 1, e.what());
    }
}
